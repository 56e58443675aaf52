#pragma once

#include <string>

#include "ioncast/adam.hpp"
#include "ioncast/model.hpp"

namespace ioncast {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "IONCKPT1" | u32 version | u64 header length | JSON header |
// float64 tensors in header order. The header carries the architecture,
// model config, channel spec, normalizer, optimizer counters and free-form
// metadata (config echo, step).
struct Checkpoint {
  std::string arch;
  nlohmann::json model_config;
  ChannelSpec spec;
  Normalizer normalizer;
  nlohmann::json meta = nlohmann::json::object();
  ParamStore<double> params;
  // Adam moments as "m/<param>" and "v/<param>"; may be empty.
  ParamStore<double> optimizer;
  AdamHyper adam;
  std::int64_t adam_t = 0;
};

template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, const Normalizer& norm, const AdamState<T>* adam,
                           nlohmann::json meta);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // FormatError on damage

// ConfigError when the checkpoint was written for another channel spec.
void require_same_spec(const Checkpoint& ckpt, const ChannelSpec& spec);

// Copies parameters by name; FormatError on a missing name or shape change.
template <typename T>
void load_params(Model<T>& model, const Checkpoint& ckpt);
template <typename T>
AdamState<T> load_adam(const Checkpoint& ckpt);

// Rebuilds the model described by a checkpoint for a dataset.
template <typename T>
std::unique_ptr<Model<T>> model_from_checkpoint(const Checkpoint& ckpt, const Dataset& data);

}  // namespace ioncast
