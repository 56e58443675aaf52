#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ioncast/astro.hpp"
#include "ioncast/channels.hpp"
#include "ioncast/drivers.hpp"
#include "ioncast/events.hpp"
#include "ioncast/iongrid.hpp"
#include "ioncast/mesh.hpp"

namespace ioncast {

// Maps and aligned drivers on one time axis. Forcings are not stored; they
// are recomputed from timestamps.
struct Dataset {
  LatLonGrid grid;
  std::int64_t cadence = 900;
  std::vector<Timestamp> times;
  std::vector<std::string> map_channels;
  std::vector<Tensor<float>> maps;             // per time [Cm x H x W]
  std::vector<std::string> driver_names;
  std::vector<std::vector<double>> drivers;    // per time, one value per driver
  astro::MagCoordMaps mag;

  std::size_t size() const { return times.size(); }
  std::optional<std::size_t> index_of(Timestamp t) const;
  std::size_t map_index(const std::string& name) const;     // throws ConfigError
  std::size_t driver_index(const std::string& name) const;  // throws ConfigError
};

// Builds frames [C x H x W] in ChannelSpec frame order, in physical units.
class FrameAssembler {
 public:
  FrameAssembler(const Dataset& data, ChannelSpec spec);

  const ChannelSpec& spec() const { return spec_; }
  const Dataset& data() const { return *data_; }
  Tensor<float> frame(std::size_t index) const;
  // Forcing channels only, [F x H x W].
  Tensor<float> forcing(Timestamp t) const;
  // Writes forcing(t) into the forcing rows of a full frame.
  void substitute_forcings(Tensor<float>& frame, Timestamp t) const;
  // [n_grid x S]: sin/cos of geographic latitude and longitude, then the
  // coordinate channels (magnetic latitude scaled by 1/90).
  Tensor<double> static_features() const;

 private:
  const Dataset* data_;
  ChannelSpec spec_;
  std::vector<std::string> forcing_names_;
  std::vector<int> map_src_;     // per frame channel, map index or -1
  std::vector<int> driver_src_;  // per frame channel, driver index or -1
};

// Per-channel z-scoring over frame channels.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::string> warnings;

  static constexpr double kStdFloor = 1e-6;

  static Normalizer fit(const FrameAssembler& frames, const std::vector<std::size_t>& indices);
  template <typename T>
  void apply(Tensor<T>& frame) const;
  template <typename T>
  void invert(Tensor<T>& frame) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

// Indices of the times where the mask is set.
std::vector<std::size_t> mask_indices(const std::vector<char>& mask);

// Directory layout: maps.iongrid, drivers/<name>.csv + <name>.schema,
// events.csv, manifest.json.
struct DatasetFiles {
  Dataset data;
  EventCatalog catalog;
  std::vector<DriverSeries> raw_drivers;
};

void save_dataset(const std::string& dir, const DatasetFiles& files, const nlohmann::json& config_echo);
// Aligns the raw drivers onto the map time axis. `mag_file` optionally names
// an IONGRID with channels maglat, maglon_sin, maglon_cos.
DatasetFiles load_dataset(const std::string& dir, const std::string& mag_file = "");
// Raw pieces: an IONGRID of maps, a directory of <name>.csv + <name>.schema
// driver files (may be empty) and an event CSV (may be empty).
DatasetFiles ingest_dataset(const std::string& maps_path, const std::string& drivers_dir,
                            const std::string& events_path, const std::string& mag_file = "");

}  // namespace ioncast
