#include "ioncast/model.hpp"

#include <cmath>

#include "ioncast/gnn.hpp"
#include "ioncast/lstm.hpp"

namespace ioncast {

template <typename T>
void Model<T>::zero_output_head() {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name.rfind("head.", 0) == 0) params_[i].value.fill(T{0});
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const std::string& arch, const nlohmann::json& config, const ChannelSpec& spec,
                                     const Dataset& data) {
  FrameAssembler frames(data, spec);
  auto statics = frames.static_features();
  if (arch == "gnn") {
    auto c = GnnConfig::from_json(config);
    auto graphs = GnnGraphs::build(data.grid, build_multimesh(c.mesh_level), c.radius_scale);
    return std::make_unique<GnnModel<T>>(c, spec, data.grid.n_lat, data.grid.n_lon, std::move(statics),
                                         std::move(graphs));
  }
  if (arch == "lstm") {
    return std::make_unique<LstmModel<T>>(LstmConfig::from_json(config), spec, data.grid.n_lat, data.grid.n_lon,
                                          statics);
  }
  throw ConfigError("unknown model architecture '" + arch + "' (expected gnn or lstm)");
}

template <typename T>
Tensor<T> normalize_forcing(const Normalizer& norm, const ChannelSpec& spec, const Tensor<float>& forcing) {
  const auto& idx = spec.forcings();
  if (forcing.rank() != 3 || forcing.dim(0) != idx.size())
    throw RolloutError("forcing provider returned " + shape_str(forcing.shape()) + " for " +
                       std::to_string(idx.size()) + " forcing channels");
  Tensor<T> out(forcing.shape());
  const std::size_t HW = forcing.size() / std::max<std::size_t>(idx.size(), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double m = norm.mean.at(idx[k]), s = norm.std.at(idx[k]);
    for (std::size_t n = 0; n < HW; ++n)
      out[k * HW + n] = static_cast<T>((static_cast<double>(forcing[k * HW + n]) - m) / s);
  }
  return out;
}

template <typename T>
void put_forcing(Tensor<T>& frame, const ChannelSpec& spec, const Tensor<float>& forcing) {
  const auto& idx = spec.forcings();
  if (idx.empty()) return;
  const std::size_t HW = frame.size() / frame.dim(0);
  if (forcing.size() != idx.size() * HW)
    throw RolloutError("forcing rows " + shape_str(forcing.shape()) + " do not fit frame " + shape_str(frame.shape()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t n = 0; n < HW; ++n) frame[idx[k] * HW + n] = static_cast<T>(forcing[k * HW + n]);
}

template <typename T>
Forecaster<T>::Forecaster(Model<T>& model, Normalizer norm, ForcingProvider forcing, std::int64_t cadence)
    : model_(&model), norm_(std::move(norm)), forcing_(std::move(forcing)), cadence_(cadence) {
  if (norm_.mean.size() != model.spec().frame_size())
    throw ConfigError("normalizer has " + std::to_string(norm_.mean.size()) + " channels, spec has " +
                      std::to_string(model.spec().frame_size()));
}

template <typename T>
Tensor<T> Forecaster<T>::step(const std::vector<Tensor<T>>& window, Timestamp t_next, int step_index) const {
  const auto& spec = model_->spec();
  if (window.empty()) throw RolloutError("empty context window");
  std::vector<Tensor<T>> normed = window;
  for (auto& f : normed) norm_.apply(f);
  const auto forcing = forcing_(t_next);
  const auto forcing_norm = normalize_forcing<T>(norm_, spec, forcing);

  Graph<T> g(false);
  auto out = model_->forward(g, normed, forcing_norm);
  const auto& r = out.value();

  const auto& last = window.back();
  Tensor<T> next = last;
  const std::size_t HW = last.size() / last.dim(0);
  const auto& pred = spec.predicted();
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const std::size_t c = pred[p];
    const T s = static_cast<T>(norm_.std[c]), m = static_cast<T>(norm_.mean[c]);
    for (std::size_t n = 0; n < HW; ++n) {
      const T v = model_->residual() ? last[c * HW + n] + r[p * HW + n] * s : m + r[p * HW + n] * s;
      if (!std::isfinite(v))
        throw RolloutError("non-finite prediction for channel '" + spec.frame_channels()[c].name + "' at step " +
                           std::to_string(step_index));
      next[c * HW + n] = v;
    }
  }
  put_forcing(next, spec, forcing);
  return next;
}

template <typename T>
std::vector<Tensor<T>> Forecaster<T>::rollout(std::vector<Tensor<T>> window, Timestamp t_last, int k) const {
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(std::max(k, 0)));
  for (int i = 1; i <= k; ++i) {
    auto next = step(window, t_last + i * cadence_, i);
    window.erase(window.begin());
    window.push_back(next);
    out.push_back(std::move(next));
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> persistence_forecast(const std::vector<Tensor<T>>& window, const ChannelSpec& spec,
                                            const ForcingProvider& forcing, Timestamp t_last, std::int64_t cadence,
                                            int k) {
  if (window.empty()) throw RolloutError("persistence needs a nonempty context");
  std::vector<Tensor<T>> out;
  for (int i = 1; i <= k; ++i) {
    Tensor<T> f = window.back();
    if (!spec.forcings().empty()) put_forcing(f, spec, forcing(t_last + i * cadence));
    out.push_back(std::move(f));
  }
  return out;
}

#define IONCAST_MODEL(T)                                                                                          \
  template class Model<T>;                                                                                        \
  template class Forecaster<T>;                                                                                   \
  template std::unique_ptr<Model<T>> make_model<T>(const std::string&, const nlohmann::json&, const ChannelSpec&, \
                                                   const Dataset&);                                               \
  template Tensor<T> normalize_forcing<T>(const Normalizer&, const ChannelSpec&, const Tensor<float>&);           \
  template void put_forcing<T>(Tensor<T>&, const ChannelSpec&, const Tensor<float>&);                             \
  template std::vector<Tensor<T>> persistence_forecast<T>(const std::vector<Tensor<T>>&, const ChannelSpec&,      \
                                                          const ForcingProvider&, Timestamp, std::int64_t, int);

IONCAST_MODEL(float)
IONCAST_MODEL(double)

}  // namespace ioncast
