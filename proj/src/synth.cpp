#include "ioncast/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ioncast/errors.hpp"

namespace ioncast {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

double kp_to_ap(double kp) {
  static const std::array<double, 10> table{0, 4, 7, 15, 27, 48, 80, 140, 240, 400};
  kp = std::clamp(kp, 0.0, 9.0);
  const auto k = std::min(static_cast<std::size_t>(kp), std::size_t{8});
  return table[k] + (kp - static_cast<double>(k)) * (table[k + 1] - table[k]);
}

DriverSchema schema_for(const std::string& units, std::int64_t cadence, AlignPolicy policy) {
  DriverSchema s;
  s.units = units;
  s.sentinel = 9999.0;
  s.cadence = cadence;
  s.policy = policy;
  s.max_gap = policy == AlignPolicy::HoldPrevious ? cadence : 2 * cadence;
  return s;
}

struct NoiseMode {
  int m;
  int n;
  double phase_lon;
  double phase_lat;
};

}  // namespace

nlohmann::json SynthConfig::to_json() const {
  return {{"n_lat", n_lat},       {"n_lon", n_lon},           {"days", days},
          {"seed", seed},         {"start", start},           {"cadence", cadence},
          {"storms_per_day", storms_per_day}, {"quiet_events", quiet_events}, {"noise_std", noise_std},
          {"noise_rho", noise_rho}};
}

const std::vector<std::string>& synth_driver_names() {
  static const std::vector<std::string> names{"kp", "ap", "f107", "s107", "m107", "y107", "symh",
                                              "bx", "by", "bz",   "vx",   "vy",   "vz"};
  return names;
}

Tensor<double> synth_clean_tec(Timestamp t, const LatLonGrid& grid, const astro::MagCoordMaps& mag, double amplitude) {
  const auto zen = astro::zenith_cos_map(t, grid, astro::Body::Sun);
  Tensor<double> out({grid.n_lat, grid.n_lon});
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ml = mag.maglat[i] / 12.0;
    out[i] = amplitude * std::pow(std::max(zen[i], 0.0), 0.9) * (1.0 + 0.6 * std::exp(-ml * ml));
  }
  return out;
}

DatasetFiles synth_dataset(const SynthConfig& cfg) {
  if (cfg.days < 1 || cfg.n_lat < 2 || cfg.n_lon < 2 || cfg.cadence <= 0)
    throw ConfigError("synthetic dataset needs days >= 1, a grid of at least 2x2 and a positive cadence");
  if (86400 % cfg.cadence != 0 || 10800 % cfg.cadence != 0)
    throw ConfigError("synthetic cadence must divide 3 hours");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const Timestamp t0 = parse_iso8601(cfg.start);
  const Timestamp t_end = t0 + static_cast<Timestamp>(cfg.days) * 86400 - cfg.cadence;
  const auto n_blocks = static_cast<std::size_t>(cfg.days) * 8;

  // Kp in 3-hour blocks: AR(1) quiet background with storm bumps on top.
  std::vector<double> kp(n_blocks);
  double ar = 0.0;
  for (auto& k : kp) {
    ar = 0.8 * ar + 0.6 * normal(rng);
    k = std::clamp(1.7 + ar, 0.0, 3.9);
  }
  const auto n_storms = static_cast<std::size_t>(std::lround(cfg.storms_per_day * cfg.days));
  const std::array<int, 9> level_cycle{1, 2, 1, 3, 2, 1, 2, 3, 4};
  struct Storm {
    std::size_t onset;
    int level;
  };
  std::vector<Storm> storms;
  if (n_storms > 0) {
    const std::size_t slot = n_blocks / n_storms;
    for (std::size_t s = 0; s < n_storms; ++s) {
      // Onset early in the slot leaves room for recovery and a quiet day.
      const auto jitter = static_cast<std::size_t>(unif(rng) * static_cast<double>(slot / 4));
      const std::size_t onset = s * slot + 1 + std::min(jitter, slot / 4);
      const int level = level_cycle[(s + cfg.seed) % level_cycle.size()];
      storms.push_back({onset, level});
      const double peak = 4.1 + level + 0.15 * unif(rng);
      for (std::size_t b = onset; b < std::min(n_blocks, onset + 16); ++b) {
        const double h = static_cast<double>(b - onset);
        const double profile = h < 2 ? (h + 1) / 3.0 : std::exp(-(h - 2) / 4.0);
        kp[b] = std::max(kp[b], std::min(9.0, peak * profile + (h < 2 ? 0 : 1.5 * (1 - profile))));
      }
    }
  }

  // Daily F10.7 with a 27-day rotation signal, and smoothed irradiance proxies.
  std::vector<double> f107(static_cast<std::size_t>(cfg.days)), s107(f107.size()), m107(f107.size()), y107(f107.size());
  double fa = 0.0, es = 0.0, em = 0.0;
  for (std::size_t d = 0; d < f107.size(); ++d) {
    fa = 0.7 * fa + 4.0 * normal(rng);
    f107[d] = 105.0 + 18.0 * std::sin(2 * kPi * static_cast<double>(d) / 27.0) + fa;
    es = d == 0 ? f107[d] : 0.7 * es + 0.3 * f107[d];
    em = d == 0 ? f107[d] : 0.85 * em + 0.15 * f107[d];
    s107[d] = 0.92 * es + 8.0;
    m107[d] = 1.05 * em - 4.0;
    y107[d] = 0.5 * f107[d] + 0.5 * s107[d];
  }

  DatasetFiles out;
  auto& data = out.data;
  data.grid = LatLonGrid(cfg.n_lat, cfg.n_lon);
  data.cadence = cfg.cadence;
  data.map_channels = {"tec"};
  data.mag = astro::dipole_mag_coords(data.grid);
  for (Timestamp t = t0; t <= t_end; t += cfg.cadence) data.times.push_back(t);
  const std::size_t T = data.times.size();

  // Raw series at native cadences.
  auto series = [&](const std::string& name, const DriverSchema& schema) {
    DriverSeries s;
    s.name = name;
    s.schema = schema;
    return s;
  };
  auto s_kp = series("kp", schema_for("index", 10800, AlignPolicy::HoldPrevious));
  auto s_ap = series("ap", schema_for("nT", 10800, AlignPolicy::HoldPrevious));
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const Timestamp t = t0 + static_cast<Timestamp>(b) * 10800;
    s_kp.times.push_back(t);
    s_kp.values.push_back(std::round(kp[b] * 3.0) / 3.0);
    s_ap.times.push_back(t);
    s_ap.values.push_back(kp_to_ap(s_kp.values.back()));
  }
  std::vector<DriverSeries> daily;
  const std::array<std::pair<const char*, const std::vector<double>*>, 4> daily_src{
      {{"f107", &f107}, {"s107", &s107}, {"m107", &m107}, {"y107", &y107}}};
  for (const auto& [name, src] : daily_src) {
    auto s = series(name, schema_for("sfu", 86400, AlignPolicy::HoldPrevious));
    for (std::size_t d = 0; d < src->size(); ++d) {
      s.times.push_back(t0 + static_cast<Timestamp>(d) * 86400);
      s.values.push_back(std::round((*src)[d] * 10.0) / 10.0);
    }
    daily.push_back(std::move(s));
  }

  // Smoothed Kp at cadence drives the fast solar-wind series and the TEC
  // amplitude.
  std::vector<double> kp_smooth(T);
  {
    double e = kp[0];
    const double alpha = 1.0 - std::exp(-static_cast<double>(cfg.cadence) / 7200.0);
    for (std::size_t i = 0; i < T; ++i) {
      const auto b = static_cast<std::size_t>((data.times[i] - t0) / 10800);
      e += alpha * (kp[b] - e);
      kp_smooth[i] = e;
    }
  }
  auto fast = [&](const std::string& name, const std::string& units) {
    return series(name, schema_for(units, cfg.cadence, AlignPolicy::Linear));
  };
  auto s_symh = fast("symh", "nT"), s_bx = fast("bx", "nT"), s_by = fast("by", "nT"), s_bz = fast("bz", "nT");
  auto s_vx = fast("vx", "km/s"), s_vy = fast("vy", "km/s"), s_vz = fast("vz", "km/s");
  double nbx = 0, nby = 0, nbz = 0, nvy = 0, nvz = 0, nsym = 0;
  for (std::size_t i = 0; i < T; ++i) {
    const Timestamp t = data.times[i];
    const double k = kp_smooth[i];
    nbx = 0.95 * nbx + 0.9 * normal(rng);
    nby = 0.95 * nby + 0.9 * normal(rng);
    nbz = 0.9 * nbz + 0.8 * normal(rng);
    nvy = 0.9 * nvy + 4.0 * normal(rng);
    nvz = 0.9 * nvz + 4.0 * normal(rng);
    nsym = 0.9 * nsym + 1.5 * normal(rng);
    auto push = [&](DriverSeries& s, double v) {
      s.times.push_back(t);
      s.values.push_back(std::round(v * 100.0) / 100.0);
    };
    push(s_symh, -10.0 * std::pow(std::max(k - 2.0, 0.0), 1.5) - 5.0 + nsym);
    push(s_bx, nbx);
    push(s_by, nby);
    push(s_bz, -2.5 * std::max(k - 3.0, 0.0) + nbz);
    push(s_vx, -(380.0 + 60.0 * std::max(k - 2.0, 0.0)) + 10.0 * nbx);
    push(s_vy, nvy);
    push(s_vz, nvz);
  }
  out.raw_drivers = {s_kp, s_ap};
  for (auto& s : daily) out.raw_drivers.push_back(std::move(s));
  for (auto* s : {&s_symh, &s_bx, &s_by, &s_bz, &s_vx, &s_vy, &s_vz}) out.raw_drivers.push_back(std::move(*s));
  {
    // Emission order follows synth_driver_names().
    std::vector<DriverSeries> ordered;
    for (const auto& name : synth_driver_names())
      for (auto& s : out.raw_drivers)
        if (s.name == name) ordered.push_back(s);
    out.raw_drivers = std::move(ordered);
  }
  const auto aligned = align_drivers(out.raw_drivers, data.times.front(), data.times.back(), cfg.cadence);
  data.driver_names = aligned.names;
  data.drivers = aligned.values;

  // Smooth AR(1) noise: a few low-order modes with independent amplitudes.
  std::vector<NoiseMode> modes;
  for (int m = 0; m <= 3; ++m)
    for (int n = 1; n <= 3; ++n) modes.push_back({m, n, 2 * kPi * unif(rng), 2 * kPi * unif(rng)});
  const double mode_std = cfg.noise_std * std::sqrt(2.0 / static_cast<double>(modes.size()));
  const double innov = std::sqrt(1.0 - cfg.noise_rho * cfg.noise_rho);
  std::vector<double> amp(modes.size());
  for (auto& a : amp) a = mode_std * normal(rng);
  const std::size_t HW = data.grid.size();
  std::vector<double> basis(modes.size() * HW);
  for (std::size_t k = 0; k < modes.size(); ++k)
    for (std::size_t r = 0; r < cfg.n_lat; ++r)
      for (std::size_t c = 0; c < cfg.n_lon; ++c) {
        const double colat = (90.0 - data.grid.lat_deg(r)) * kDeg;
        const double lon = data.grid.lon_deg(c) * kDeg;
        basis[k * HW + r * cfg.n_lon + c] =
            std::cos(modes[k].m * lon + modes[k].phase_lon) * std::cos(modes[k].n * colat + modes[k].phase_lat);
      }

  const auto i_f107 = aligned.index("f107");
  data.maps.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    for (auto& a : amp) a = cfg.noise_rho * a + innov * mode_std * normal(rng);
    const double A = (8.0 + 0.12 * aligned.values[i][i_f107]) * (1.0 + 0.12 * (kp_smooth[i] - 2.0));
    const auto clean = synth_clean_tec(data.times[i], data.grid, data.mag, A);
    Tensor<float> frame({1, cfg.n_lat, cfg.n_lon});
    for (std::size_t n = 0; n < HW; ++n) {
      double v = clean[n];
      for (std::size_t k = 0; k < modes.size(); ++k) v += amp[k] * basis[k * HW + n];
      frame[n] = static_cast<float>(std::max(v, 0.0));
    }
    data.maps.push_back(std::move(frame));
  }

  // Catalog: active windows (Kp >= 4) around each storm peak, G-level from
  // the peak Kp, plus quiet days.
  std::vector<StormEvent> events;
  for (const auto& s : storms) {
    std::size_t b0 = s.onset + 2, b1 = s.onset + 2;
    while (b0 > 0 && kp[b0 - 1] >= 4.0) --b0;
    while (b1 + 1 < n_blocks && kp[b1 + 1] >= 4.0) ++b1;
    double peak = 0.0;
    for (auto b = b0; b <= b1; ++b) peak = std::max(peak, s_kp.values[b]);
    if (peak < 5.0) continue;
    const int g = std::clamp(static_cast<int>(std::floor(peak + 1e-9)) - 4, 1, 5);
    events.push_back({t0 + static_cast<Timestamp>(b0) * 10800, t0 + static_cast<Timestamp>(b1 + 1) * 10800 - cfg.cadence, g});
  }
  if (cfg.quiet_events > 0 && n_storms > 0) {
    // One quiet day after each storm has decayed, until enough are placed.
    int placed = 0;
    for (std::size_t s = 0; s < n_storms && placed < cfg.quiet_events; ++s) {
      const std::size_t b0 = storms[s].onset + 18;
      if (b0 + 8 > n_blocks) break;
      bool quiet = true;
      for (std::size_t b = b0; b < b0 + 8 && quiet; ++b) quiet = kp[b] < 4.0;
      if (!quiet) continue;
      events.push_back({t0 + static_cast<Timestamp>(b0) * 10800, t0 + static_cast<Timestamp>(b0 + 8) * 10800 - cfg.cadence, 0});
      ++placed;
    }
  }
  out.catalog = EventCatalog::normalized(std::move(events));
  return out;
}

}  // namespace ioncast
