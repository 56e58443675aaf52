#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ioncast/autograd.hpp"
#include "ioncast/channels.hpp"
#include "ioncast/dataset.hpp"
#include "ioncast/timeutil.hpp"
#include "json.hpp"

namespace ioncast {

// Common surface of the forecasting networks. All tensors handed to forward()
// are normalized; the result covers the non-forcing channels only.
template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string arch() const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual int context_len() const = 0;
  // True when forward() returns a residual on top of the last context frame.
  virtual bool residual() const = 0;

  // window: context_len frames [C x H x W]; forcing_next: [F x H x W] at the
  // prediction time. Returns [P x H x W] with P = spec().predicted().size().
  virtual Var<T> forward(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) = 0;

  const ChannelSpec& spec() const { return spec_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Zeroes every "head.*" parameter, turning the model into persistence.
  void zero_output_head();

 protected:
  explicit Model(ChannelSpec spec) : spec_(std::move(spec)) {}

  ChannelSpec spec_;
  ParamStore<T> params_;
};

// Builds a model of the named architecture ("gnn" or "lstm") for a dataset.
template <typename T>
std::unique_ptr<Model<T>> make_model(const std::string& arch, const nlohmann::json& config, const ChannelSpec& spec,
                                     const Dataset& data);

// Analytic forcing rows [F x H x W] for a timestamp.
using ForcingProvider = std::function<Tensor<float>(Timestamp)>;

// Physical-unit stepping around a model: normalization, residual addition and
// forcing substitution.
template <typename T>
class Forecaster {
 public:
  Forecaster(Model<T>& model, Normalizer norm, ForcingProvider forcing, std::int64_t cadence);

  // Next frame after `window` (oldest first), stamped t_next. Forcing rows are
  // the provider's values verbatim. RolloutError on non-finite output.
  Tensor<T> step(const std::vector<Tensor<T>>& window, Timestamp t_next, int step_index = 0) const;
  // k frames for t_last + cadence .. t_last + k * cadence. Only forcings are
  // refreshed; predictions are fed back into the window.
  std::vector<Tensor<T>> rollout(std::vector<Tensor<T>> window, Timestamp t_last, int k) const;

  const Normalizer& normalizer() const { return norm_; }
  Model<T>& model() const { return *model_; }

 private:
  Model<T>* model_;
  Normalizer norm_;
  ForcingProvider forcing_;
  std::int64_t cadence_;
};

// Last context frame repeated, forcings substituted from the provider.
template <typename T>
std::vector<Tensor<T>> persistence_forecast(const std::vector<Tensor<T>>& window, const ChannelSpec& spec,
                                            const ForcingProvider& forcing, Timestamp t_last, std::int64_t cadence,
                                            int k);

// Normalizes forcing rows [F x H x W] with the statistics of the spec's forcing
// positions.
template <typename T>
Tensor<T> normalize_forcing(const Normalizer& norm, const ChannelSpec& spec, const Tensor<float>& forcing);

// Writes forcing rows into the forcing positions of a frame.
template <typename T>
void put_forcing(Tensor<T>& frame, const ChannelSpec& spec, const Tensor<float>& forcing);

}  // namespace ioncast
