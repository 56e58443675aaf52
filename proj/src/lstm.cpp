#include "ioncast/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ioncast/nn.hpp"
#include "ioncast/ops.hpp"

namespace ioncast {

void LstmConfig::validate() const {
  if (encoder_layers < 1) throw ConfigError("lstm: encoder_layers must be >= 1");
  if (latent == 0) throw ConfigError("lstm: latent must be positive");
  if (context_len < 1) throw ConfigError("lstm: context_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("lstm: dropout must be in [0, 1)");
  if (base_channels == 0 || max_channels < base_channels)
    throw ConfigError("lstm: need 0 < base_channels <= max_channels");
}

nlohmann::json LstmConfig::to_json() const {
  return {{"encoder_layers", encoder_layers}, {"latent", latent}, {"context_len", context_len},
          {"dropout", dropout}, {"base_channels", base_channels}, {"max_channels", max_channels},
          {"max_downsamples", max_downsamples}, {"residual", residual}, {"zero_head", zero_head},
          {"seed", seed}};
}

LstmConfig LstmConfig::from_json(const nlohmann::json& j) {
  LstmConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "encoder_layers") c.encoder_layers = v.get<int>();
    else if (key == "latent") c.latent = v.get<std::size_t>();
    else if (key == "context_len") c.context_len = v.get<int>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "base_channels") c.base_channels = v.get<std::size_t>();
    else if (key == "max_channels") c.max_channels = v.get<std::size_t>();
    else if (key == "max_downsamples") c.max_downsamples = v.get<int>();
    else if (key == "residual") c.residual = v.get<bool>();
    else if (key == "zero_head") c.zero_head = v.get<bool>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ConfigError("lstm: unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

template <typename T>
LstmModel<T>::LstmModel(LstmConfig config, ChannelSpec spec, std::size_t height, std::size_t width,
                        const Tensor<double>& static_features)
    : Model<T>(std::move(spec)), config_(config), height_(height), width_(width) {
  config_.validate();
  const auto& sp = this->spec_;
  if (sp.predicted().empty()) throw ConfigError("lstm: channel spec has nothing to predict");
  // The 3x3 kernel must fit the longitude extent at every layer.
  if (height < 3 || width < 3)
    throw ConfigError("lstm: grid " + std::to_string(height) + "x" + std::to_string(width) +
                      " is too small for the 3x3 encoder");
  require_rank(static_features, 2, "lstm static features");
  if (static_features.dim(0) != height * width) throw DimensionError("lstm: static features do not match the grid");
  const std::size_t S = static_features.dim(1), HW = height * width;
  static_maps_ = Tensor<T>({S, height, width});
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t n = 0; n < HW; ++n) static_maps_[s * HW + n] = static_cast<T>(static_features[n * S + s]);

  std::size_t h = height, w = width, c = sp.frame_size() + S;
  int downs = 0;
  for (int i = 0; i < config_.encoder_layers; ++i) {
    const bool can = (h + 1) / 2 >= 3 && (w + 1) / 2 >= 3;
    const bool allowed = config_.max_downsamples < 0 || downs < config_.max_downsamples;
    const std::size_t stride = can && allowed ? 2 : 1;
    const std::size_t oc = std::min(config_.base_channels << downs, config_.max_channels);
    const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    stages_.push_back({h, w, oh, ow, c, oc, stride});
    if (stride == 2) ++downs;
    h = oh;
    w = ow;
    c = oc;
  }

  std::mt19937_64 rng(config_.seed);
  auto& ps = this->params_;
  const std::size_t L = config_.latent;
  for (std::size_t i = 0; i < stages_.size(); ++i)
    nn::init_conv(ps, "enc" + std::to_string(i), stages_[i].out_c, stages_[i].in_c, 3, rng);
  nn::init_linear(ps, "enc_proj", c, L, rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  ps.add("lstm.w_x", nn::gaussian<T>({L, 4 * L}, scale, rng));
  ps.add("lstm.w_h", nn::gaussian<T>({L, 4 * L}, scale, rng));
  ps.add("lstm.b", Tensor<T>({4 * L}));
  nn::init_linear(ps, "dec_in", L, c * h * w, rng);
  for (std::size_t i = stages_.size(); i-- > 0;) {
    const std::size_t out = i == 0 ? config_.base_channels : stages_[i].in_c;
    nn::init_conv_transposed(ps, "dec" + std::to_string(i), stages_[i].out_c, out, 3, rng);
  }
  nn::init_conv_transposed(ps, "head", config_.base_channels + sp.forcings().size(), sp.predicted().size(), 3, rng,
                           config_.zero_head);
}

template <typename T>
Var<T> LstmModel<T>::encode_frame(Graph<T>& g, const Tensor<T>& frame) {
  auto& ps = this->params_;
  if (frame.shape() != Shape{this->spec_.frame_size(), height_, width_})
    throw DimensionError("lstm: frame " + shape_str(frame.shape()) + " does not match the channel spec");
  auto x = static_maps_.dim(0) ? ops::concat<T>({g.constant(frame), g.constant(static_maps_)}, 0) : g.constant(frame);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    x = ops::swish(ops::add_channel(ops::conv2d_circular(x, nn::bind(g, ps, p + ".k"), stages_[i].stride),
                                    nn::bind(g, ps, p + ".b")));
  }
  return nn::linear(g, ps, "enc_proj", ops::global_avg_pool(x));
}

template <typename T>
typename LstmModel<T>::State LstmModel<T>::sequence_step(Graph<T>& g, Var<T> latent, State s) {
  auto& ps = this->params_;
  ops::LstmWeights<T> w{nn::bind(g, ps, "lstm.w_x"), nn::bind(g, ps, "lstm.w_h"), nn::bind(g, ps, "lstm.b")};
  auto [h, c] = ops::lstm_cell(latent, s.h, s.c, w);
  return {h, c};
}

template <typename T>
Var<T> LstmModel<T>::decode_latent(Graph<T>& g, Var<T> h, const Tensor<T>& forcing_next) {
  auto& ps = this->params_;
  const auto& last = stages_.back();
  auto d = ops::swish(nn::linear(g, ps, "dec_in", h));
  d = ops::reshape(d, {last.out_c, last.out_h, last.out_w});
  for (std::size_t i = stages_.size(); i-- > 0;) {
    const auto& s = stages_[i];
    if (s.stride == 2) d = ops::crop(ops::upsample_bilinear(d, 2), 0, s.in_h, 0, s.in_w);
    const std::string p = "dec" + std::to_string(i);
    d = ops::swish(ops::add_channel(ops::conv2d_transposed(d, nn::bind(g, ps, p + ".k"), 1, s.in_h, s.in_w),
                                    nn::bind(g, ps, p + ".b")));
  }
  const std::size_t F = this->spec_.forcings().size();
  if (forcing_next.shape() != Shape{F, height_, width_})
    throw RolloutError("lstm: forcing rows for the prediction time are missing or misshaped (" +
                       shape_str(forcing_next.shape()) + ")");
  if (F) d = ops::concat<T>({d, g.constant(forcing_next)}, 0);
  return ops::add_channel(ops::conv2d_transposed(d, nn::bind(g, ps, "head.k"), 1, height_, width_),
                          nn::bind(g, ps, "head.b"));
}

template <typename T>
Var<T> LstmModel<T>::forward_from(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next,
                                  std::optional<State> initial) {
  if (window.size() != static_cast<std::size_t>(config_.context_len))
    throw DimensionError("lstm: window has " + std::to_string(window.size()) + " frames, context is " +
                         std::to_string(config_.context_len));
  const std::size_t L = config_.latent;
  State s = initial ? *initial : State{g.constant(Tensor<T>({1, L})), g.constant(Tensor<T>({1, L}))};
  for (const auto& f : window) s = sequence_step(g, ops::dropout(encode_frame(g, f), config_.dropout), s);
  return decode_latent(g, ops::dropout(s.h, config_.dropout), forcing_next);
}

template <typename T>
Var<T> LstmModel<T>::forward(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) {
  return forward_from(g, window, forcing_next, std::nullopt);
}

template class LstmModel<float>;
template class LstmModel<double>;

}  // namespace ioncast
