#pragma once

#include <cstdint>
#include <optional>

#include "ioncast/model.hpp"

namespace ioncast {

struct LstmConfig {
  int encoder_layers = 6;
  std::size_t latent = 128;
  int context_len = 8;
  double dropout = 0.15;
  std::size_t base_channels = 8;  // doubled after every downsampling layer
  std::size_t max_channels = 64;
  int max_downsamples = -1;  // negative: stride 2 while both extents are >= 4
  bool residual = true;
  bool zero_head = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static LstmConfig from_json(const nlohmann::json& j);
};

template <typename T>
class LstmModel final : public Model<T> {
 public:
  // static_features: [n_grid x S], fed to the encoder as extra image channels.
  LstmModel(LstmConfig config, ChannelSpec spec, std::size_t height, std::size_t width,
            const Tensor<double>& static_features);

  std::string arch() const override { return "lstm"; }
  nlohmann::json config_json() const override { return config_.to_json(); }
  int context_len() const override { return config_.context_len; }
  bool residual() const override { return config_.residual; }
  Var<T> forward(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) override;

  struct State {
    Var<T> h, c;  // [1 x latent]
  };
  // Same as forward() but starting from the given state instead of zeros.
  Var<T> forward_from(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next,
                      std::optional<State> initial);

  const LstmConfig& config() const { return config_; }
  // Frame [C x H x W] -> latent [1 x latent].
  Var<T> encode_frame(Graph<T>& g, const Tensor<T>& frame);
  State sequence_step(Graph<T>& g, Var<T> latent, State s);
  // Hidden state -> [P x H x W].
  Var<T> decode_latent(Graph<T>& g, Var<T> h, const Tensor<T>& forcing_next);

  struct Stage {
    std::size_t in_h, in_w, out_h, out_w, in_c, out_c, stride;
  };
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  LstmConfig config_;
  std::size_t height_, width_;
  Tensor<T> static_maps_;  // [S x H x W]
  std::vector<Stage> stages_;
};

extern template class LstmModel<float>;
extern template class LstmModel<double>;

}  // namespace ioncast
