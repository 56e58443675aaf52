#include "ioncast/channels.hpp"

#include <algorithm>
#include <set>

#include "ioncast/errors.hpp"

namespace ioncast {

std::string to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::Target: return "target";
    case ChannelKind::Driver: return "driver";
    case ChannelKind::Coordinate: return "coordinate";
    case ChannelKind::Forcing: return "forcing";
  }
  return "?";
}

std::string to_string(ChannelSource s) {
  switch (s) {
    case ChannelSource::MapFile: return "map-file";
    case ChannelSource::DriverFile: return "driver-file";
    case ChannelSource::Computed: return "computed";
  }
  return "?";
}

ChannelKind parse_channel_kind(const std::string& s) {
  if (s == "target") return ChannelKind::Target;
  if (s == "driver") return ChannelKind::Driver;
  if (s == "coordinate") return ChannelKind::Coordinate;
  if (s == "forcing") return ChannelKind::Forcing;
  throw ConfigError("unknown channel kind '" + s + "'");
}

ChannelSource parse_channel_source(const std::string& s) {
  if (s == "map-file") return ChannelSource::MapFile;
  if (s == "driver-file") return ChannelSource::DriverFile;
  if (s == "computed") return ChannelSource::Computed;
  throw ConfigError("unknown channel source '" + s + "'");
}

ChannelSpec::ChannelSpec(std::vector<ChannelDesc> channels) : channels_(std::move(channels)) {
  std::set<std::string> seen;
  std::size_t targets = 0;
  for (const auto& c : channels_) {
    if (c.name.empty()) throw ConfigError("channel with empty name");
    if (!seen.insert(c.name).second) throw ConfigError("duplicate channel '" + c.name + "'");
    if (!(c.loss_weight >= 0.0)) throw ConfigError("channel '" + c.name + "' has negative loss weight");
    if (c.kind == ChannelKind::Forcing && c.loss_weight != 0.0)
      throw ConfigError("forcing channel '" + c.name + "' must have loss weight 0");
    if (c.kind == ChannelKind::Coordinate && c.loss_weight != 0.0)
      throw ConfigError("coordinate channel '" + c.name + "' is static and must have loss weight 0");
    if (c.kind == ChannelKind::Target) ++targets;
  }
  if (!channels_.empty() && targets == 0) throw ConfigError("channel spec has no target channel");
  for (const auto& c : channels_) {
    if (c.kind == ChannelKind::Coordinate) continue;
    if (c.kind == ChannelKind::Forcing)
      forcing_.push_back(frame_.size());
    else
      predicted_.push_back(frame_.size());
    frame_.push_back(c);
  }
}

std::vector<std::string> ChannelSpec::frame_names() const {
  std::vector<std::string> out;
  for (const auto& c : frame_) out.push_back(c.name);
  return out;
}

std::vector<std::string> ChannelSpec::names_of(ChannelKind kind) const {
  std::vector<std::string> out;
  for (const auto& c : channels_)
    if (c.kind == kind) out.push_back(c.name);
  return out;
}

std::size_t ChannelSpec::frame_index(const std::string& name) const {
  for (std::size_t i = 0; i < frame_.size(); ++i)
    if (frame_[i].name == name) return i;
  throw ConfigError("channel '" + name + "' is not a frame channel");
}

bool ChannelSpec::has(const std::string& name) const {
  return std::any_of(channels_.begin(), channels_.end(), [&](const ChannelDesc& c) { return c.name == name; });
}

std::vector<double> ChannelSpec::frame_loss_weights() const {
  std::vector<double> w;
  for (const auto& c : frame_) w.push_back(c.loss_weight);
  return w;
}

nlohmann::json ChannelSpec::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& c : channels_) {
    arr.push_back({{"name", c.name},
                   {"kind", to_string(c.kind)},
                   {"source", to_string(c.source)},
                   {"loss_weight", c.loss_weight}});
  }
  return arr;
}

ChannelSpec ChannelSpec::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("channel spec must be a JSON array");
  std::vector<ChannelDesc> out;
  for (const auto& e : j) {
    try {
      out.push_back({e.at("name").get<std::string>(), parse_channel_kind(e.at("kind").get<std::string>()),
                     parse_channel_source(e.at("source").get<std::string>()), e.at("loss_weight").get<double>()});
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("malformed channel entry: ") + ex.what());
    }
  }
  return ChannelSpec(std::move(out));
}

ChannelSpec make_channel_spec(double tec_weight, const std::vector<std::string>& drivers,
                              const std::vector<std::string>& forcings, const std::vector<std::string>& coordinates) {
  std::vector<ChannelDesc> c;
  c.push_back({"tec", ChannelKind::Target, ChannelSource::MapFile, tec_weight});
  for (const auto& d : drivers) c.push_back({d, ChannelKind::Driver, ChannelSource::DriverFile, 1.0});
  for (const auto& f : forcings) c.push_back({f, ChannelKind::Forcing, ChannelSource::Computed, 0.0});
  for (const auto& k : coordinates) c.push_back({k, ChannelKind::Coordinate, ChannelSource::Computed, 0.0});
  return ChannelSpec(std::move(c));
}

}  // namespace ioncast
