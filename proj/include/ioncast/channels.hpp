#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ioncast {

enum class ChannelKind { Target, Driver, Coordinate, Forcing };
enum class ChannelSource { MapFile, DriverFile, Computed };

std::string to_string(ChannelKind k);
std::string to_string(ChannelSource s);
ChannelKind parse_channel_kind(const std::string& s);
ChannelSource parse_channel_source(const std::string& s);

struct ChannelDesc {
  std::string name;
  ChannelKind kind = ChannelKind::Target;
  ChannelSource source = ChannelSource::MapFile;
  double loss_weight = 0.0;

  bool operator==(const ChannelDesc&) const = default;
};

// Ordered channel list. Frames hold the target, driver and forcing channels in
// this order; coordinate channels are static maps kept outside the frames.
class ChannelSpec {
 public:
  ChannelSpec() = default;
  explicit ChannelSpec(std::vector<ChannelDesc> channels);

  const std::vector<ChannelDesc>& channels() const { return channels_; }
  const std::vector<ChannelDesc>& frame_channels() const { return frame_; }
  std::vector<std::string> frame_names() const;
  std::vector<std::string> names_of(ChannelKind kind) const;

  std::size_t frame_size() const { return frame_.size(); }
  // Positions within the frame.
  const std::vector<std::size_t>& predicted() const { return predicted_; }
  const std::vector<std::size_t>& forcings() const { return forcing_; }
  std::size_t frame_index(const std::string& name) const;  // throws ConfigError
  bool has(const std::string& name) const;

  std::vector<double> frame_loss_weights() const;

  nlohmann::json to_json() const;
  static ChannelSpec from_json(const nlohmann::json& j);

  bool operator==(const ChannelSpec& o) const { return channels_ == o.channels_; }

 private:
  std::vector<ChannelDesc> channels_;
  std::vector<ChannelDesc> frame_;
  std::vector<std::size_t> predicted_;
  std::vector<std::size_t> forcing_;
};

// Target "tec" with the given weight, then drivers (unit weight), forcings
// (weight 0) and coordinate channels.
ChannelSpec make_channel_spec(double tec_weight, const std::vector<std::string>& drivers,
                              const std::vector<std::string>& forcings, const std::vector<std::string>& coordinates);

}  // namespace ioncast
