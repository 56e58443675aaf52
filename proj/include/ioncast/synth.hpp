#pragma once

#include <string>

#include "ioncast/dataset.hpp"

namespace ioncast {

struct SynthConfig {
  std::size_t n_lat = 18;
  std::size_t n_lon = 36;
  int days = 60;
  std::uint64_t seed = 1;
  std::string start = "2015-09-01T00:00:00Z";
  std::int64_t cadence = 900;
  double storms_per_day = 0.25;
  int quiet_events = 8;
  double noise_std = 1.0;   // TECU
  double noise_rho = 0.97;  // per cadence step

  nlohmann::json to_json() const;
};

// Names of the synthetic driver series, in emission order.
const std::vector<std::string>& synth_driver_names();

// Desk-scale stand-in for global TEC maps:
//   TEC = A(t) * max(cos chi_sun, 0)^0.9 * (1 + 0.6 exp(-(maglat / 12 deg)^2)) + noise
// with A driven by synthetic F10.7 and Kp, noise a spatially smooth AR(1)
// field, and the result clipped at 0. Storm windows (Kp >= 4 around a peak of at least 5) and quiet G0
// windows populate the catalog.
DatasetFiles synth_dataset(const SynthConfig& config);

// Noise-free TEC at one instant, for tests and diagnostics.
Tensor<double> synth_clean_tec(Timestamp t, const LatLonGrid& grid, const astro::MagCoordMaps& mag, double amplitude);

}  // namespace ioncast
