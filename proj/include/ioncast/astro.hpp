#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "ioncast/mesh.hpp"
#include "ioncast/tensor.hpp"
#include "ioncast/timeutil.hpp"

namespace ioncast::astro {

enum class Body { Sun, Moon };

// Geocentric apparent position reduced to the point on Earth with the body at
// zenith. Distance is normalized (sun by 1 AU, moon by 384400 km).
struct SubPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;  // (-180, 180]
  double distance = 0.0;
};

// Low-precision series are used between 1950 and 2100; outside, RangeError.
SubPoint sun_position(Timestamp t);
SubPoint moon_position(Timestamp t);
SubPoint body_position(Timestamp t, Body body);

inline SubPoint subsolar_point(Timestamp t) { return sun_position(t); }
inline SubPoint sublunar_point(Timestamp t) { return moon_position(t); }
double body_distance(Timestamp t, Body body);

// Greenwich mean sidereal time in degrees [0, 360).
double gmst_deg(Timestamp t);

// cos(zenith) = sin(lat) sin(dec) + cos(lat) cos(dec) cos(lon - sub_lon).
double zenith_cos(double lat_deg, double lon_deg, double sub_lat_deg, double sub_lon_deg);
Tensor<double> zenith_cos_map(Timestamp t, const LatLonGrid& grid, Body body);

// Channels computable for any timestamp.
const std::vector<std::string>& forcing_channel_names();
bool is_forcing_channel(const std::string& name);

// [C x H x W] in the order of `names`; unknown names raise ConfigError.
Tensor<float> forcing_frame(Timestamp t, const LatLonGrid& grid, const std::vector<std::string>& names);

// Memoized forcing_frame; returns the same values bit for bit. Safe for
// concurrent use.
class ForcingCache {
 public:
  ForcingCache(LatLonGrid grid, std::vector<std::string> names);
  const Tensor<float>& get(Timestamp t);
  const std::vector<std::string>& names() const { return names_; }
  const LatLonGrid& grid() const { return grid_; }
  std::size_t size() const;

 private:
  LatLonGrid grid_;
  std::vector<std::string> names_;
  mutable std::mutex mu_;
  std::map<Timestamp, Tensor<float>> frames_;
};

// Tilted centered dipole. Defaults to the 2015 epoch pole.
struct DipolePole {
  double lat_deg = 80.4;
  double lon_deg = -72.6;
};

struct MagCoordMaps {
  Tensor<double> maglat;      // [H x W] degrees
  Tensor<double> maglon_sin;  // [H x W]
  Tensor<double> maglon_cos;  // [H x W]
  std::string provenance;     // "analytic-dipole" or "external-file"
};

inline const std::vector<std::string>& mag_channel_names() {
  static const std::vector<std::string> names{"maglat", "maglon_sin", "maglon_cos"};
  return names;
}

// Magnetic latitude/longitude (degrees) of a geographic point.
std::pair<double, double> dipole_coords(double lat_deg, double lon_deg, const DipolePole& pole = {});
MagCoordMaps dipole_mag_coords(const LatLonGrid& grid, const DipolePole& pole = {});
// From a [3 x H x W] stack with channels {maglat, maglon_sin, maglon_cos};
// FormatError on any shape or channel mismatch.
MagCoordMaps mag_coords_from_stack(const Tensor<float>& stack, const std::vector<std::string>& channels,
                                   const LatLonGrid& grid);

}  // namespace ioncast::astro
