#include "ioncast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ioncast/errors.hpp"

namespace fs = std::filesystem;

namespace ioncast {

std::optional<std::size_t> Dataset::index_of(Timestamp t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) return std::nullopt;
  return static_cast<std::size_t>(it - times.begin());
}

std::size_t Dataset::map_index(const std::string& name) const {
  for (std::size_t i = 0; i < map_channels.size(); ++i)
    if (map_channels[i] == name) return i;
  throw ConfigError("dataset has no map channel '" + name + "'");
}

std::size_t Dataset::driver_index(const std::string& name) const {
  for (std::size_t i = 0; i < driver_names.size(); ++i)
    if (driver_names[i] == name) return i;
  throw ConfigError("dataset has no driver '" + name + "'");
}

FrameAssembler::FrameAssembler(const Dataset& data, ChannelSpec spec) : data_(&data), spec_(std::move(spec)) {
  for (const auto& c : spec_.frame_channels()) {
    int m = -1, d = -1;
    switch (c.kind) {
      case ChannelKind::Target:
        m = static_cast<int>(data.map_index(c.name));
        break;
      case ChannelKind::Driver:
        d = static_cast<int>(data.driver_index(c.name));
        break;
      case ChannelKind::Forcing:
        if (!astro::is_forcing_channel(c.name)) throw ConfigError("unknown forcing channel '" + c.name + "'");
        forcing_names_.push_back(c.name);
        break;
      case ChannelKind::Coordinate:
        break;
    }
    map_src_.push_back(m);
    driver_src_.push_back(d);
  }
  const auto& known = astro::mag_channel_names();
  for (const auto& name : spec_.names_of(ChannelKind::Coordinate))
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("unknown coordinate channel '" + name + "'");
}

Tensor<float> FrameAssembler::frame(std::size_t index) const {
  const auto& d = *data_;
  if (index >= d.size()) throw IndexError("frame index " + std::to_string(index) + " out of range");
  const std::size_t HW = d.grid.size();
  Tensor<float> out({spec_.frame_size(), d.grid.n_lat, d.grid.n_lon});
  for (std::size_t c = 0; c < spec_.frame_size(); ++c) {
    float* dst = out.ptr() + c * HW;
    if (map_src_[c] >= 0) {
      const float* src = d.maps[index].ptr() + static_cast<std::size_t>(map_src_[c]) * HW;
      std::copy(src, src + HW, dst);
    } else if (driver_src_[c] >= 0) {
      std::fill(dst, dst + HW, static_cast<float>(d.drivers[index][static_cast<std::size_t>(driver_src_[c])]));
    }
  }
  if (!forcing_names_.empty()) substitute_forcings(out, d.times[index]);
  return out;
}

Tensor<float> FrameAssembler::forcing(Timestamp t) const { return astro::forcing_frame(t, data_->grid, forcing_names_); }

void FrameAssembler::substitute_forcings(Tensor<float>& frame, Timestamp t) const {
  if (forcing_names_.empty()) return;
  const auto f = forcing(t);
  const std::size_t HW = data_->grid.size();
  const auto& idx = spec_.forcings();
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(f.ptr() + k * HW, f.ptr() + (k + 1) * HW, frame.ptr() + idx[k] * HW);
}

Tensor<double> FrameAssembler::static_features() const {
  const auto& g = data_->grid;
  const auto coords = spec_.names_of(ChannelKind::Coordinate);
  Tensor<double> out({g.size(), 4 + coords.size()});
  constexpr double deg = std::numbers::pi / 180.0;
  for (std::size_t r = 0; r < g.n_lat; ++r)
    for (std::size_t c = 0; c < g.n_lon; ++c) {
      const std::size_t n = r * g.n_lon + c;
      out.at(n, 0) = std::sin(g.lat_deg(r) * deg);
      out.at(n, 1) = std::cos(g.lat_deg(r) * deg);
      out.at(n, 2) = std::sin(g.lon_deg(c) * deg);
      out.at(n, 3) = std::cos(g.lon_deg(c) * deg);
      for (std::size_t k = 0; k < coords.size(); ++k) {
        const auto& name = coords[k];
        const auto& mag = data_->mag;
        if (mag.maglat.shape() != Shape{g.n_lat, g.n_lon}) throw ConfigError("magnetic coordinates not loaded");
        double v = 0.0;
        if (name == "maglat") v = mag.maglat[n] / 90.0;
        if (name == "maglon_sin") v = mag.maglon_sin[n];
        if (name == "maglon_cos") v = mag.maglon_cos[n];
        out.at(n, 4 + k) = v;
      }
    }
  return out;
}

Normalizer Normalizer::fit(const FrameAssembler& frames, const std::vector<std::size_t>& indices) {
  const std::size_t C = frames.spec().frame_size();
  Normalizer n;
  n.mean.assign(C, 0.0);
  n.std.assign(C, 1.0);
  if (indices.empty()) throw ArgumentError("normalizer needs at least one training frame");
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  std::size_t count = 0;
  for (auto i : indices) {
    const auto f = frames.frame(i);
    const std::size_t HW = f.size() / C;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < HW; ++k) sum[c] += f[c * HW + k];
    count += HW;
  }
  for (std::size_t c = 0; c < C; ++c) n.mean[c] = sum[c] / static_cast<double>(count);
  // Second pass for a stable variance.
  for (auto i : indices) {
    const auto f = frames.frame(i);
    const std::size_t HW = f.size() / C;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < HW; ++k) {
        const double d = f[c * HW + k] - n.mean[c];
        sq[c] += d * d;
      }
  }
  const auto names = frames.spec().frame_names();
  for (std::size_t c = 0; c < C; ++c) {
    n.std[c] = std::sqrt(sq[c] / static_cast<double>(count));
    if (n.std[c] < kStdFloor) {
      n.warnings.push_back("channel '" + names[c] + "' is constant on the training split; std floored to 1e-6");
      n.std[c] = kStdFloor;
    }
  }
  return n;
}

template <typename T>
void Normalizer::apply(Tensor<T>& frame) const {
  const std::size_t C = mean.size();
  if (frame.rank() == 0 || frame.dim(0) != C) throw DimensionError("normalizer expects " + std::to_string(C) + " channels");
  const std::size_t HW = frame.size() / C;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < HW; ++k) {
      auto& v = frame[c * HW + k];
      v = static_cast<T>((static_cast<double>(v) - mean[c]) / std[c]);
    }
}

template <typename T>
void Normalizer::invert(Tensor<T>& frame) const {
  const std::size_t C = mean.size();
  if (frame.rank() == 0 || frame.dim(0) != C) throw DimensionError("normalizer expects " + std::to_string(C) + " channels");
  const std::size_t HW = frame.size() / C;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < HW; ++k) {
      auto& v = frame[c * HW + k];
      v = static_cast<T>(static_cast<double>(v) * std[c] + mean[c]);
    }
}

template void Normalizer::apply<float>(Tensor<float>&) const;
template void Normalizer::apply<double>(Tensor<double>&) const;
template void Normalizer::invert<float>(Tensor<float>&) const;
template void Normalizer::invert<double>(Tensor<double>&) const;

nlohmann::json Normalizer::to_json() const { return {{"mean", mean}, {"std", std}}; }

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.std = j.at("std").get<std::vector<double>>();
  if (n.mean.size() != n.std.size()) throw FormatError("normalizer mean/std lengths differ");
  return n;
}

std::vector<std::size_t> mask_indices(const std::vector<char>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

void save_dataset(const std::string& dir, const DatasetFiles& files, const nlohmann::json& config_echo) {
  const auto& d = files.data;
  fs::create_directories(fs::path(dir) / "drivers");
  GridStack stack;
  stack.cadence = static_cast<std::uint32_t>(d.cadence);
  stack.channels = d.map_channels;
  stack.height = d.grid.n_lat;
  stack.width = d.grid.n_lon;
  stack.times = d.times;
  stack.frames = d.maps;
  write_grid_stack((fs::path(dir) / "maps.iongrid").string(), stack);
  std::vector<std::string> names;
  for (const auto& s : files.raw_drivers) {
    write_text(fs::path(dir) / "drivers" / (s.name + ".csv"), format_driver_csv(s));
    write_text(fs::path(dir) / "drivers" / (s.name + ".schema"), format_driver_schema(s.schema));
    names.push_back(s.name);
  }
  write_text(fs::path(dir) / "events.csv", format_event_csv(files.catalog));
  nlohmann::json manifest{{"format", "ioncast-dataset"},
                          {"version", 1},
                          {"n_lat", d.grid.n_lat},
                          {"n_lon", d.grid.n_lon},
                          {"cadence", d.cadence},
                          {"drivers", names},
                          {"mag_provenance", d.mag.provenance},
                          {"config", config_echo}};
  write_text(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

DatasetFiles assemble_dataset(GridStack stack, std::vector<DriverSeries> raw_drivers, EventCatalog catalog,
                              const std::string& mag_file) {
  DatasetFiles out;
  auto& d = out.data;
  if (stack.cadence == 0) throw IngestError("map cadence is zero");
  d.grid = LatLonGrid(stack.height, stack.width);
  d.cadence = stack.cadence;
  d.times = stack.times;
  d.map_channels = stack.channels;
  d.maps = std::move(stack.frames);
  for (auto t : d.times)
    if ((t - d.times.front()) % d.cadence != 0)
      throw IngestError("map timestamp " + format_iso8601(t) + " is off the cadence grid");
  out.raw_drivers = std::move(raw_drivers);
  if (!d.times.empty()) {
    auto aligned = align_drivers(out.raw_drivers, d.times.front(), d.times.back(), d.cadence);
    d.driver_names = aligned.names;
    for (auto t : d.times) d.drivers.push_back(aligned.values[static_cast<std::size_t>((t - d.times.front()) / d.cadence)]);
  }
  out.catalog = std::move(catalog);
  if (mag_file.empty()) {
    d.mag = astro::dipole_mag_coords(d.grid);
  } else {
    auto m = read_grid_stack(mag_file);
    if (m.frames.size() != 1) throw FormatError("magnetic coordinate file must hold exactly one frame");
    d.mag = astro::mag_coords_from_stack(m.frames[0], m.channels, d.grid);
  }
  return out;
}

}  // namespace

DatasetFiles load_dataset(const std::string& dir, const std::string& mag_file) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IngestError("no manifest.json in '" + dir + "'");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("bad manifest.json: ") + e.what());
  }
  auto stack = read_grid_stack((fs::path(dir) / "maps.iongrid").string());
  std::vector<DriverSeries> raw;
  for (const auto& name : manifest.value("drivers", std::vector<std::string>{})) {
    const auto base = fs::path(dir) / "drivers" / name;
    const auto schema = read_driver_schema(base.string() + ".schema");
    raw.push_back(read_driver_csv(base.string() + ".csv", schema, name));
  }
  EventCatalog catalog;
  if (fs::exists(fs::path(dir) / "events.csv")) catalog = read_event_csv((fs::path(dir) / "events.csv").string());
  return assemble_dataset(std::move(stack), std::move(raw), std::move(catalog), mag_file);
}

DatasetFiles ingest_dataset(const std::string& maps_path, const std::string& drivers_dir,
                            const std::string& events_path, const std::string& mag_file) {
  auto stack = read_grid_stack(maps_path);
  std::vector<DriverSeries> raw;
  if (!drivers_dir.empty()) {
    if (!fs::is_directory(drivers_dir)) throw IngestError("driver directory '" + drivers_dir + "' does not exist");
    std::vector<fs::path> csvs;
    for (const auto& e : fs::directory_iterator(drivers_dir))
      if (e.path().extension() == ".csv") csvs.push_back(e.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& c : csvs) {
      auto schema_path = c;
      schema_path.replace_extension(".schema");
      if (!fs::exists(schema_path)) throw IngestError("driver " + c.string() + " has no schema file next to it");
      raw.push_back(read_driver_csv(c.string(), read_driver_schema(schema_path.string()), c.stem().string()));
    }
  }
  EventCatalog catalog;
  if (!events_path.empty()) catalog = read_event_csv(events_path);
  return assemble_dataset(std::move(stack), std::move(raw), std::move(catalog), mag_file);
}

}  // namespace ioncast
