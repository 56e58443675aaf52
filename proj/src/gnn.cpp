#include "ioncast/gnn.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "ioncast/nn.hpp"
#include "ioncast/ops.hpp"

namespace ioncast {

void GnnConfig::validate() const {
  if (mesh_level < 0 || mesh_level > 8) throw ConfigError("gnn: mesh_level must be in 0..8");
  if (processor_layers < 0) throw ConfigError("gnn: processor_layers must be >= 0");
  if (latent == 0) throw ConfigError("gnn: latent must be positive");
  if (context_len < 1) throw ConfigError("gnn: context_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("gnn: dropout must be in [0, 1)");
  if (!(radius_scale > 0.0)) throw ConfigError("gnn: radius_scale must be positive");
}

nlohmann::json GnnConfig::to_json() const {
  return {{"mesh_level", mesh_level}, {"processor_layers", processor_layers}, {"latent", latent},
          {"context_len", context_len}, {"dropout", dropout}, {"radius_scale", radius_scale},
          {"residual", residual}, {"zero_head", zero_head}, {"seed", seed}};
}

GnnConfig GnnConfig::from_json(const nlohmann::json& j) {
  GnnConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "mesh_level") c.mesh_level = v.get<int>();
    else if (key == "processor_layers") c.processor_layers = v.get<int>();
    else if (key == "latent") c.latent = v.get<std::size_t>();
    else if (key == "context_len") c.context_len = v.get<int>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "radius_scale") c.radius_scale = v.get<double>();
    else if (key == "residual") c.residual = v.get<bool>();
    else if (key == "zero_head") c.zero_head = v.get<bool>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ConfigError("gnn: unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

GnnGraphs GnnGraphs::build(const LatLonGrid& grid, const MultiMesh& mesh, double radius_scale) {
  GnnGraphs g;
  g.n_grid = grid.size();
  g.n_mesh = mesh.num_vertices();
  g.g2m = build_grid2mesh(grid, mesh, radius_scale);
  g.m2g = build_mesh2grid(mesh, grid);
  g.mesh_senders = mesh.senders;
  g.mesh_receivers = mesh.receivers;
  g.mesh_edge_features =
      edge_features(mesh.senders, mesh.receivers, mesh.vertices, mesh.vertices, mesh.max_edge_length());
  g.mesh_node_features = Tensor<double>({g.n_mesh, 2});
  for (std::size_t i = 0; i < g.n_mesh; ++i) {
    const double lat = lat_of(mesh.vertices[i]) * std::numbers::pi / 180.0;
    g.mesh_node_features.at(i, 0) = std::sin(lat);
    g.mesh_node_features.at(i, 1) = std::cos(lat);
  }
  for (auto d : g.g2m.receiver_degree())
    if (d == 0) throw ConstructionError("gnn: a mesh node receives no grid edge");
  return g;
}

template <typename T>
GnnModel<T>::GnnModel(GnnConfig config, ChannelSpec spec, std::size_t height, std::size_t width,
                      Tensor<double> static_features, GnnGraphs graphs)
    : Model<T>(std::move(spec)), config_(config), height_(height), width_(width), graphs_(std::move(graphs)) {
  config_.validate();
  const auto& sp = this->spec_;
  if (sp.predicted().empty()) throw ConfigError("gnn: channel spec has nothing to predict");
  if (graphs_.n_grid != height * width) throw DimensionError("gnn: graphs built for a different grid");
  require_rank(static_features, 2, "gnn static features");
  if (static_features.dim(0) != height * width) throw DimensionError("gnn: static features do not match the grid");
  static_ = static_features.cast<T>();
  g2m_feat_ = graphs_.g2m.features.cast<T>();
  m2g_feat_ = graphs_.m2g.features.cast<T>();
  mesh_edge_feat_ = graphs_.mesh_edge_features.cast<T>();
  mesh_node_feat_ = graphs_.mesh_node_features.cast<T>();

  const std::size_t ctx = static_cast<std::size_t>(config_.context_len);
  d_in_ = sp.predicted().size() * ctx + sp.forcings().size() * (ctx + 1) + static_.dim(1);
  const std::size_t L = config_.latent;
  std::mt19937_64 rng(config_.seed);
  auto& ps = this->params_;
  nn::init_mlp(ps, "grid_embed", d_in_, L, L, true, rng);
  nn::init_mlp(ps, "mesh_embed", mesh_node_feat_.dim(1), L, L, true, rng);
  nn::init_mlp(ps, "g2m_edge", 4 + 2 * L, L, L, true, rng);
  if (config_.processor_layers > 0) nn::init_mlp(ps, "mesh_edge_embed", 4, L, L, true, rng);
  for (int l = 0; l < config_.processor_layers; ++l) {
    const std::string p = "proc" + std::to_string(l);
    nn::init_mlp(ps, p + ".edge", 3 * L, L, L, true, rng);
    nn::init_mlp(ps, p + ".node", 2 * L, L, L, true, rng);
  }
  nn::init_mlp(ps, "m2g_edge", 4 + 2 * L, L, L, true, rng);
  nn::init_linear(ps, "head", L, sp.predicted().size(), rng, config_.zero_head);
}

template <typename T>
Tensor<T> GnnModel<T>::grid_inputs(std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) const {
  const auto& sp = this->spec_;
  const std::size_t ctx = static_cast<std::size_t>(config_.context_len);
  const std::size_t HW = height_ * width_;
  const Shape frame_shape{sp.frame_size(), height_, width_};
  if (window.size() != ctx)
    throw DimensionError("gnn: window has " + std::to_string(window.size()) + " frames, context is " +
                         std::to_string(ctx));
  for (const auto& f : window)
    if (f.shape() != frame_shape)
      throw DimensionError("gnn: frame " + shape_str(f.shape()) + ", expected " + shape_str(frame_shape));
  const auto& pred = sp.predicted();
  const auto& forc = sp.forcings();
  if (forcing_next.shape() != Shape{forc.size(), height_, width_})
    throw RolloutError("gnn: forcing rows for the prediction time are missing or misshaped (" +
                       shape_str(forcing_next.shape()) + ")");

  const std::size_t S = static_.dim(1);
  Tensor<T> x({HW, d_in_});
  for (std::size_t n = 0; n < HW; ++n) {
    T* row = x.ptr() + n * d_in_;
    std::size_t k = 0;
    for (std::size_t t = 0; t < ctx; ++t)
      for (auto c : pred) row[k++] = window[t][c * HW + n];
    for (std::size_t t = 0; t < ctx; ++t)
      for (auto c : forc) row[k++] = window[t][c * HW + n];
    for (std::size_t f = 0; f < forc.size(); ++f) row[k++] = forcing_next[f * HW + n];
    for (std::size_t s = 0; s < S; ++s) row[k++] = static_[n * S + s];
  }
  return x;
}

template <typename T>
typename GnnModel<T>::Encoded GnnModel<T>::encode(Graph<T>& g, Var<T> grid_inputs) {
  auto& ps = this->params_;
  const auto& gr = graphs_;
  if (grid_inputs.shape() != Shape{gr.n_grid, d_in_})
    throw DimensionError("gnn encode: inputs " + shape_str(grid_inputs.shape()) + ", expected [" +
                         std::to_string(gr.n_grid) + " x " + std::to_string(d_in_) + "]");
  auto vg = nn::mlp(g, ps, "grid_embed", grid_inputs, 0.0, true);
  auto vm = nn::mlp(g, ps, "mesh_embed", g.constant(mesh_node_feat_), 0.0, true);
  auto in = ops::concat<T>({g.constant(g2m_feat_), ops::gather_rows(vg, std::span(gr.g2m.senders)),
                            ops::gather_rows(vm, std::span(gr.g2m.receivers))},
                           1);
  auto msg = nn::mlp(g, ps, "g2m_edge", in, 0.0, true);
  vm = ops::add(vm, ops::scatter_sum(msg, std::span(gr.g2m.receivers), gr.n_mesh));
  return {vm, vg};
}

template <typename T>
Var<T> GnnModel<T>::process(Graph<T>& g, Var<T> vm, int layers) {
  if (layers < 0 || layers > config_.processor_layers) layers = config_.processor_layers;
  if (layers == 0) return vm;
  auto& ps = this->params_;
  const auto& gr = graphs_;
  const std::span<const std::int32_t> snd(gr.mesh_senders), rcv(gr.mesh_receivers);
  auto e = nn::mlp(g, ps, "mesh_edge_embed", g.constant(mesh_edge_feat_), 0.0, true);
  for (int l = 0; l < layers; ++l) {
    const std::string p = "proc" + std::to_string(l);
    auto upd = nn::mlp(g, ps, p + ".edge",
                       ops::concat<T>({e, ops::gather_rows(vm, snd), ops::gather_rows(vm, rcv)}, 1),
                       config_.dropout, true);
    auto agg = ops::scatter_sum(upd, rcv, gr.n_mesh);
    vm = ops::add(vm, nn::mlp(g, ps, p + ".node", ops::concat<T>({vm, agg}, 1), config_.dropout, true));
    e = ops::add(e, upd);
  }
  return vm;
}

template <typename T>
Var<T> GnnModel<T>::decode(Graph<T>& g, Var<T> vm, Var<T> vg) {
  auto& ps = this->params_;
  const auto& gr = graphs_;
  auto in = ops::concat<T>({g.constant(m2g_feat_), ops::gather_rows(vm, std::span(gr.m2g.senders)),
                            ops::gather_rows(vg, std::span(gr.m2g.receivers))},
                           1);
  auto msg = nn::mlp(g, ps, "m2g_edge", in, 0.0, true);
  vg = ops::add(vg, ops::scatter_sum(msg, std::span(gr.m2g.receivers), gr.n_grid));
  return nn::linear(g, ps, "head", vg);
}

template <typename T>
Var<T> GnnModel<T>::forward(Graph<T>& g, std::span<const Tensor<T>> window, const Tensor<T>& forcing_next) {
  auto x = g.constant(grid_inputs(window, forcing_next));
  auto enc = encode(g, x);
  auto vm = process(g, enc.mesh);
  auto out = decode(g, vm, enc.grid);
  const std::size_t P = this->spec_.predicted().size();
  return ops::reshape(ops::transpose(out), {P, height_, width_});
}

template class GnnModel<float>;
template class GnnModel<double>;

}  // namespace ioncast
