#pragma once

#include <cstdint>

#include "ioncast/mesh.hpp"
#include "ioncast/model.hpp"

namespace ioncast {

struct GnnConfig {
  int mesh_level = 6;  // finest multimesh level
  int processor_layers = 6;
  std::size_t latent = 128;
  int context_len = 8;
  double dropout = 0.15;
  double radius_scale = 0.6;
  bool residual = true;
  bool zero_head = true;  // start from persistence
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static GnnConfig from_json(const nlohmann::json& j);  // unknown keys -> ConfigError
};

// Graphs and fixed node/edge features of one grid/mesh pairing.
struct GnnGraphs {
  std::size_t n_grid = 0;
  std::size_t n_mesh = 0;
  BipartiteGraph g2m;
  BipartiteGraph m2g;
  std::vector<std::int32_t> mesh_senders;
  std::vector<std::int32_t> mesh_receivers;
  Tensor<double> mesh_edge_features;  // [E x 4]
  Tensor<double> mesh_node_features;  // [M x 2]: sin, cos of latitude

  static GnnGraphs build(const LatLonGrid& grid, const MultiMesh& mesh, double radius_scale);
};

template <typename T>
class GnnModel final : public Model<T> {
 public:
  // static_features: [n_grid x S] appended to every grid node's inputs.
  GnnModel(GnnConfig config, ChannelSpec spec, std::size_t height, std::size_t width, Tensor<double> static_features,
           GnnGraphs graphs);

  std::string arch() const override { return "gnn"; }
  nlohmann::json config_json() const override { return config_.to_json(); }
  int context_len() const override { return config_.context_len; }
  bool residual() const override { return config_.residual; }
  Var<T> forward(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) override;

  const GnnConfig& config() const { return config_; }
  const GnnGraphs& graphs() const { return graphs_; }
  std::size_t input_dim() const { return d_in_; }

  // Per grid node: non-forcing channels of every context frame, forcing
  // channels of every context frame and of the prediction time, then the
  // static features. [n_grid x d_in]
  Tensor<T> grid_inputs(std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) const;

  struct Encoded {
    Var<T> mesh;  // [M x L]
    Var<T> grid;  // [G x L]
  };
  Encoded encode(Graph<T>& g, Var<T> grid_inputs);
  // Runs the first `layers` processor layers (all when negative).
  Var<T> process(Graph<T>& g, Var<T> mesh, int layers = -1);
  // [G x P] output head values.
  Var<T> decode(Graph<T>& g, Var<T> mesh, Var<T> grid);

 private:
  GnnConfig config_;
  std::size_t height_, width_;
  Tensor<T> static_;
  GnnGraphs graphs_;
  Tensor<T> g2m_feat_, m2g_feat_, mesh_edge_feat_, mesh_node_feat_;
  std::size_t d_in_ = 0;
};

extern template class GnnModel<float>;
extern template class GnnModel<double>;

}  // namespace ioncast
