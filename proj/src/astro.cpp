#include "ioncast/astro.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ioncast/errors.hpp"

namespace ioncast::astro {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kEarthRadiusKm = 6378.14;
constexpr double kMoonMeanKm = 384400.0;

void check_range(Timestamp t) {
  // 1950-01-01T00:00Z and 2101-01-01T00:00Z.
  constexpr Timestamp lo = -631152000;
  constexpr Timestamp hi = 4133980800;
  if (t < lo || t >= hi) {
    throw RangeError("timestamp " + format_iso8601(t) + " outside the 1950-2100 validity window of the ephemeris series");
  }
}

double wrap180(double deg) {
  double x = std::fmod(deg, 360.0);
  if (x <= -180.0) x += 360.0;
  if (x > 180.0) x -= 360.0;
  return x;
}

double days_since_j2000(Timestamp t) {
  // J2000.0 = 2000-01-01T12:00:00 TT, taken as UT here.
  return (static_cast<double>(t) - 946728000.0) / 86400.0;
}

// Ecliptic (lambda, beta) to equatorial (ra, dec), all degrees.
void ecliptic_to_equatorial(double lambda, double beta, double eps, double& ra, double& dec) {
  const double l = lambda * kDeg, b = beta * kDeg, e = eps * kDeg;
  dec = std::asin(std::sin(b) * std::cos(e) + std::cos(b) * std::sin(e) * std::sin(l)) / kDeg;
  ra = std::atan2(std::sin(l) * std::cos(e) - std::tan(b) * std::sin(e), std::cos(l)) / kDeg;
}

SubPoint from_equatorial(Timestamp t, double ra, double dec, double distance) {
  return {dec, wrap180(ra - gmst_deg(t)), distance};
}

}  // namespace

double gmst_deg(Timestamp t) {
  const double n = days_since_j2000(t);
  double g = std::fmod(280.46061837 + 360.98564736629 * n, 360.0);
  if (g < 0) g += 360.0;
  return g;
}

SubPoint sun_position(Timestamp t) {
  check_range(t);
  const double n = days_since_j2000(t);
  const double L = 280.460 + 0.9856474 * n;
  const double g = (357.528 + 0.9856003 * n) * kDeg;
  const double lambda = L + 1.915 * std::sin(g) + 0.020 * std::sin(2 * g);
  const double eps = 23.439 - 4e-7 * n;
  const double R = 1.00014 - 0.01671 * std::cos(g) - 0.00014 * std::cos(2 * g);
  double ra = 0, dec = 0;
  ecliptic_to_equatorial(lambda, 0.0, eps, ra, dec);
  return from_equatorial(t, ra, dec, R);
}

SubPoint moon_position(Timestamp t) {
  check_range(t);
  const double n = days_since_j2000(t);
  const double T = n / 36525.0;
  auto s = [](double deg) { return std::sin(deg * kDeg); };
  auto c = [](double deg) { return std::cos(deg * kDeg); };
  const double lambda = 218.32 + 481267.881 * T + 6.29 * s(135.0 + 477198.87 * T) - 1.27 * s(259.3 - 413335.36 * T) +
                        0.66 * s(235.7 + 890534.22 * T) + 0.21 * s(269.9 + 954397.74 * T) -
                        0.19 * s(357.5 + 35999.05 * T) - 0.11 * s(186.5 + 966404.03 * T);
  const double beta = 5.13 * s(93.3 + 483202.02 * T) + 0.28 * s(228.2 + 960400.89 * T) -
                      0.28 * s(318.3 + 6003.15 * T) - 0.17 * s(217.6 - 407332.21 * T);
  const double parallax = 0.9508 + 0.0518 * c(135.0 + 477198.87 * T) + 0.0095 * c(259.3 - 413335.36 * T) +
                          0.0078 * c(235.7 + 890534.22 * T) + 0.0028 * c(269.9 + 954397.74 * T);
  const double eps = 23.439 - 4e-7 * n;
  const double dist_km = kEarthRadiusKm / std::sin(parallax * kDeg);
  double ra = 0, dec = 0;
  ecliptic_to_equatorial(lambda, beta, eps, ra, dec);
  return from_equatorial(t, ra, dec, dist_km / kMoonMeanKm);
}

SubPoint body_position(Timestamp t, Body body) { return body == Body::Sun ? sun_position(t) : moon_position(t); }

double body_distance(Timestamp t, Body body) { return body_position(t, body).distance; }

double zenith_cos(double lat_deg, double lon_deg, double sub_lat_deg, double sub_lon_deg) {
  const double phi = lat_deg * kDeg, dec = sub_lat_deg * kDeg, ha = (lon_deg - sub_lon_deg) * kDeg;
  return std::sin(phi) * std::sin(dec) + std::cos(phi) * std::cos(dec) * std::cos(ha);
}

Tensor<double> zenith_cos_map(Timestamp t, const LatLonGrid& grid, Body body) {
  const auto p = body_position(t, body);
  Tensor<double> out({grid.n_lat, grid.n_lon});
  for (std::size_t r = 0; r < grid.n_lat; ++r)
    for (std::size_t c = 0; c < grid.n_lon; ++c)
      out.at(r, c) = zenith_cos(grid.lat_deg(r), grid.lon_deg(c), p.lat_deg, p.lon_deg);
  return out;
}

const std::vector<std::string>& forcing_channel_names() {
  static const std::vector<std::string> names{
      "sun_zenith_cos",   "moon_zenith_cos",  "subsolar_lat_sin",  "subsolar_lat_cos", "subsolar_lon_sin",
      "subsolar_lon_cos", "sublunar_lat_sin", "sublunar_lat_cos",  "sublunar_lon_sin", "sublunar_lon_cos",
      "sun_distance",     "moon_distance",    "local_time_sin",    "local_time_cos"};
  return names;
}

bool is_forcing_channel(const std::string& name) {
  const auto& n = forcing_channel_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

Tensor<float> forcing_frame(Timestamp t, const LatLonGrid& grid, const std::vector<std::string>& names) {
  for (const auto& name : names)
    if (!is_forcing_channel(name)) throw ConfigError("unknown forcing channel '" + name + "'");
  const std::size_t H = grid.n_lat, W = grid.n_lon;
  Tensor<float> out({names.size(), H, W});
  if (names.empty()) return out;
  const auto sun = sun_position(t);
  const auto moon = moon_position(t);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto& name = names[k];
    auto fill_map = [&](auto fn) {
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) out.at(k, r, c) = static_cast<float>(fn(grid.lat_deg(r), grid.lon_deg(c)));
    };
    auto fill_const = [&](double v) {
      fill_map([v](double, double) { return v; });
    };
    if (name == "sun_zenith_cos") {
      fill_map([&](double la, double lo) { return zenith_cos(la, lo, sun.lat_deg, sun.lon_deg); });
    } else if (name == "moon_zenith_cos") {
      fill_map([&](double la, double lo) { return zenith_cos(la, lo, moon.lat_deg, moon.lon_deg); });
    } else if (name == "subsolar_lat_sin") {
      fill_const(std::sin(sun.lat_deg * kDeg));
    } else if (name == "subsolar_lat_cos") {
      fill_const(std::cos(sun.lat_deg * kDeg));
    } else if (name == "subsolar_lon_sin") {
      fill_const(std::sin(sun.lon_deg * kDeg));
    } else if (name == "subsolar_lon_cos") {
      fill_const(std::cos(sun.lon_deg * kDeg));
    } else if (name == "sublunar_lat_sin") {
      fill_const(std::sin(moon.lat_deg * kDeg));
    } else if (name == "sublunar_lat_cos") {
      fill_const(std::cos(moon.lat_deg * kDeg));
    } else if (name == "sublunar_lon_sin") {
      fill_const(std::sin(moon.lon_deg * kDeg));
    } else if (name == "sublunar_lon_cos") {
      fill_const(std::cos(moon.lon_deg * kDeg));
    } else if (name == "sun_distance") {
      fill_const(sun.distance);
    } else if (name == "moon_distance") {
      fill_const(moon.distance);
    } else {
      // Local solar time as an angle: noon (pi) under the subsolar meridian.
      const bool is_sin = name == "local_time_sin";
      fill_map([&](double, double lo) {
        const double angle = (lo - sun.lon_deg + 180.0) * kDeg;
        return is_sin ? std::sin(angle) : std::cos(angle);
      });
    }
  }
  return out;
}

ForcingCache::ForcingCache(LatLonGrid grid, std::vector<std::string> names)
    : grid_(std::move(grid)), names_(std::move(names)) {
  for (const auto& n : names_)
    if (!is_forcing_channel(n)) throw ConfigError("unknown forcing channel '" + n + "'");
}

const Tensor<float>& ForcingCache::get(Timestamp t) {
  {
    std::lock_guard lock(mu_);
    auto it = frames_.find(t);
    if (it != frames_.end()) return it->second;
  }
  auto frame = forcing_frame(t, grid_, names_);
  std::lock_guard lock(mu_);
  return frames_.emplace(t, std::move(frame)).first->second;
}

std::size_t ForcingCache::size() const {
  std::lock_guard lock(mu_);
  return frames_.size();
}

std::pair<double, double> dipole_coords(double lat_deg, double lon_deg, const DipolePole& pole) {
  // Rotate about z by -pole_lon, then about y by -(90 - pole_lat): the pole
  // lands on +z and the pole meridian on the x-z half plane.
  const auto p = unit_from_latlon(lat_deg, lon_deg);
  const double lam = pole.lon_deg * kDeg;
  const double theta = (90.0 - pole.lat_deg) * kDeg;
  const double x1 = std::cos(lam) * p[0] + std::sin(lam) * p[1];
  const double y1 = -std::sin(lam) * p[0] + std::cos(lam) * p[1];
  const double z1 = p[2];
  const double x2 = std::cos(theta) * x1 - std::sin(theta) * z1;
  const double z2 = std::sin(theta) * x1 + std::cos(theta) * z1;
  const double mlat = std::atan2(z2, std::hypot(x2, y1)) / kDeg;
  const double mlon = std::atan2(y1, x2) / kDeg;
  return {mlat, mlon};
}

MagCoordMaps dipole_mag_coords(const LatLonGrid& grid, const DipolePole& pole) {
  MagCoordMaps m;
  m.provenance = "analytic-dipole";
  m.maglat = Tensor<double>({grid.n_lat, grid.n_lon});
  m.maglon_sin = m.maglat;
  m.maglon_cos = m.maglat;
  for (std::size_t r = 0; r < grid.n_lat; ++r)
    for (std::size_t c = 0; c < grid.n_lon; ++c) {
      const auto [mlat, mlon] = dipole_coords(grid.lat_deg(r), grid.lon_deg(c), pole);
      m.maglat.at(r, c) = mlat;
      m.maglon_sin.at(r, c) = std::sin(mlon * kDeg);
      m.maglon_cos.at(r, c) = std::cos(mlon * kDeg);
    }
  return m;
}

MagCoordMaps mag_coords_from_stack(const Tensor<float>& stack, const std::vector<std::string>& channels,
                                   const LatLonGrid& grid) {
  const Shape want{3, grid.n_lat, grid.n_lon};
  if (stack.shape() != want) {
    throw FormatError("magnetic coordinate file has shape " + shape_str(stack.shape()) + ", expected " +
                      shape_str(want));
  }
  if (channels != mag_channel_names()) {
    throw FormatError("magnetic coordinate file must hold channels maglat, maglon_sin, maglon_cos in that order");
  }
  MagCoordMaps m;
  m.provenance = "external-file";
  m.maglat = Tensor<double>({grid.n_lat, grid.n_lon});
  m.maglon_sin = m.maglat;
  m.maglon_cos = m.maglat;
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    m.maglat[i] = stack[i];
    m.maglon_sin[i] = stack[n + i];
    m.maglon_cos[i] = stack[2 * n + i];
    if (std::abs(m.maglat[i]) > 90.0) throw FormatError("magnetic latitude out of [-90, 90] at node " + std::to_string(i));
  }
  return m;
}

}  // namespace ioncast::astro
