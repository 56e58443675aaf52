#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ioncast/checkpoint.hpp"
#include "ioncast/gnn.hpp"
#include "ioncast/gradcheck.hpp"
#include "ioncast/lstm.hpp"
#include "ioncast/ops.hpp"
#include "ioncast/synth.hpp"

using namespace ioncast;
using namespace ioncast::oracle;

namespace {

Tensor<double> random_static(std::size_t n, std::size_t s, std::mt19937_64& rng) {
  return random_tensor({n, s}, rng);
}

std::vector<Tensor<double>> random_window(const ChannelSpec& spec, std::size_t ctx, std::size_t H, std::size_t W,
                                          std::mt19937_64& rng) {
  std::vector<Tensor<double>> w;
  for (std::size_t t = 0; t < ctx; ++t) w.push_back(random_tensor({spec.frame_size(), H, W}, rng));
  return w;
}

struct TinyGnn {
  LatLonGrid grid;
  ChannelSpec spec;
  GnnConfig config;
  std::unique_ptr<GnnModel<double>> model;
};

TinyGnn tiny_gnn(int context, std::size_t latent, int layers, std::uint64_t seed = 1, bool zero_head = false) {
  TinyGnn t;
  t.grid = LatLonGrid(6, 12);
  t.spec = make_channel_spec(2.0, {"kp"}, {"sun_zenith_cos"}, {});
  t.config.mesh_level = 1;
  t.config.processor_layers = layers;
  t.config.latent = latent;
  t.config.context_len = context;
  t.config.dropout = 0.0;
  t.config.zero_head = zero_head;
  t.config.seed = seed;
  std::mt19937_64 rng(seed + 100);
  auto graphs = GnnGraphs::build(t.grid, build_multimesh(1), t.config.radius_scale);
  t.model = std::make_unique<GnnModel<double>>(t.config, t.spec, 6, 12, random_static(72, 4, rng), graphs);
  return t;
}

std::set<std::size_t> changed_rows(const Tensor<double>& a, const Tensor<double>& b, double tol = 0.0) {
  std::set<std::size_t> rows;
  const std::size_t cols = a.dim(1);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) rows.insert(i / cols);
  return rows;
}

Tensor<float> forcing_for(const LatLonGrid& grid, const ChannelSpec& spec, Timestamp t) {
  return astro::forcing_frame(t, grid, spec.names_of(ChannelKind::Forcing));
}

Normalizer unit_normalizer(std::size_t C) {
  Normalizer n;
  n.mean.assign(C, 0.5);
  n.std.assign(C, 2.0);
  return n;
}

}  // namespace

TEST_CASE("gnn input width") {
  auto grid = LatLonGrid(6, 12);
  auto graphs = GnnGraphs::build(grid, build_multimesh(1), 0.6);
  std::mt19937_64 rng(2);
  GnnConfig c;
  c.mesh_level = 1;
  c.latent = 4;
  c.processor_layers = 1;
  c.context_len = 1;
  GnnModel<double> a(c, make_channel_spec(1.0, {}, {}, {}), 6, 12, random_static(72, 4, rng), graphs);
  CHECK(a.input_dim() == 5);
  c.context_len = 8;
  GnnModel<double> b(c, make_channel_spec(1.0, {"kp", "ap"}, {"sun_zenith_cos", "moon_zenith_cos", "sun_distance"}, {}),
                     6, 12, random_static(72, 4, rng), graphs);
  CHECK(b.input_dim() == 55);
}

TEST_CASE("gnn grid inputs are per node") {
  auto t = tiny_gnn(3, 4, 1);
  std::mt19937_64 rng(3);
  auto w = random_window(t.spec, 3, 6, 12, rng);
  auto f = random_tensor({1, 6, 12}, rng);
  auto x = t.model->grid_inputs(w, f);
  REQUIRE(x.shape() == Shape{72, 3 * 2 + 4 * 1 + 4});
  // Oracle layout for node 17.
  const std::size_t n = 17;
  std::vector<double> expect;
  for (int k = 0; k < 3; ++k) {
    expect.push_back(w[k][0 * 72 + n]);
    expect.push_back(w[k][1 * 72 + n]);
  }
  for (int k = 0; k < 3; ++k) expect.push_back(w[k][2 * 72 + n]);
  expect.push_back(f[n]);
  for (std::size_t s = 0; s < expect.size(); ++s) CHECK(x.at(n, s) == expect[s]);

  // Permuting node order permutes rows identically.
  std::vector<std::size_t> perm(72);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Tensor<double>& a) {
    Tensor<double> out(a.shape());
    const std::size_t C = a.dim(0);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < 72; ++i) out[c * 72 + i] = a[c * 72 + perm[i]];
    return out;
  };
  std::vector<Tensor<double>> wp;
  for (auto& fr : w) wp.push_back(permute(fr));
  auto xp = t.model->grid_inputs(wp, permute(f));
  for (std::size_t i = 0; i < 72; ++i)
    for (std::size_t s = 0; s < 10; ++s) CHECK(xp.at(i, s) == x.at(perm[i], s));

  CHECK_THROWS_AS(t.model->grid_inputs(w, random_tensor({2, 6, 12}, rng)), RolloutError);
  w.pop_back();
  CHECK_THROWS_AS(t.model->grid_inputs(w, f), DimensionError);
}

TEST_CASE("gnn encoder") {
  auto t = tiny_gnn(2, 6, 1);
  auto& m = *t.model;
  const auto& g2m = m.graphs().g2m;
  std::mt19937_64 rng(4);
  auto x = random_tensor({72, m.input_dim()}, rng);

  Graph<double> g0;
  auto base = m.encode(g0, g0.constant(x));
  for (std::size_t node = 0; node < 72; node += 7) {
    auto xp = x;
    for (std::size_t s = 0; s < m.input_dim(); ++s) xp.at(node, s) *= 2.0;
    Graph<double> g;
    auto enc = m.encode(g, g.constant(xp));
    std::set<std::size_t> hood;
    for (std::size_t e = 0; e < g2m.size(); ++e)
      if (static_cast<std::size_t>(g2m.senders[e]) == node) hood.insert(static_cast<std::size_t>(g2m.receivers[e]));
    const auto changed = changed_rows(base.mesh.value(), enc.mesh.value());
    CHECK(!changed.empty());
    CHECK(std::includes(hood.begin(), hood.end(), changed.begin(), changed.end()));
    CHECK(changed_rows(base.grid.value(), enc.grid.value()) == std::set<std::size_t>{node});
  }

  // Zero parameters and zero inputs give zero latents.
  for (std::size_t i = 0; i < m.params().size(); ++i) m.params()[i].value.fill(0.0);
  Graph<double> gz;
  auto z = m.encode(gz, gz.constant(Tensor<double>({72, m.input_dim()})));
  for (auto v : z.mesh.value().data()) CHECK(v == 0.0);
  for (auto v : z.grid.value().data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(m.encode(gz, gz.constant(Tensor<double>({71, m.input_dim()}))), DimensionError);
}

TEST_CASE("gnn processor") {
  auto t = tiny_gnn(2, 6, 3);
  auto& m = *t.model;
  const auto& gr = m.graphs();
  std::mt19937_64 rng(5);
  auto vm = random_tensor({gr.n_mesh, 6}, rng);

  Graph<double> g;
  auto same = m.process(g, g.constant(vm), 0);
  CHECK(same.value().identical(vm));

  Graph<double> g1;
  auto base = m.process(g1, g1.constant(vm), 1).value();
  for (std::size_t node = 0; node < gr.n_mesh; node += 5) {
    auto p = vm;
    for (std::size_t k = 0; k < 6; ++k) p.at(node, k) += 0.5;
    Graph<double> g2;
    auto out = m.process(g2, g2.constant(p), 1).value();
    std::set<std::size_t> hood{node};
    for (std::size_t e = 0; e < gr.mesh_senders.size(); ++e)
      if (static_cast<std::size_t>(gr.mesh_senders[e]) == node) hood.insert(gr.mesh_receivers[e]);
    const auto changed = changed_rows(base, out);
    CHECK(std::includes(hood.begin(), hood.end(), changed.begin(), changed.end()));
    CHECK(changed.size() > 1);
  }

  // Zeroed update outputs leave only the residual path.
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    auto& p = m.params()[i];
    if (p.name.rfind("proc", 0) == 0 && (p.name.find(".1.") != std::string::npos || p.name.ends_with(".ln.b")))
      p.value.fill(0.0);
  }
  Graph<double> g3;
  CHECK(m.process(g3, g3.constant(vm)).value().identical(vm));
}

TEST_CASE("gnn decoder") {
  auto t = tiny_gnn(2, 6, 1);
  auto& m = *t.model;
  const auto& m2g = m.graphs().m2g;
  std::mt19937_64 rng(6);
  auto vm = random_tensor({m.graphs().n_mesh, 6}, rng);
  auto vg = random_tensor({72, 6}, rng);
  Graph<double> g;
  auto base = m.decode(g, g.constant(vm), g.constant(vg)).value();
  CHECK(base.shape() == Shape{72, 2});
  for (std::size_t node = 0; node < m.graphs().n_mesh; ++node) {
    auto p = vm;
    p.at(node, 0) += 1.0;
    Graph<double> g2;
    auto out = m.decode(g2, g2.constant(p), g2.constant(vg)).value();
    std::set<std::size_t> fed;
    for (std::size_t e = 0; e < m2g.size(); ++e)
      if (static_cast<std::size_t>(m2g.senders[e]) == node) fed.insert(m2g.receivers[e]);
    const auto changed = changed_rows(base, out);
    CHECK(std::includes(fed.begin(), fed.end(), changed.begin(), changed.end()));
  }
  auto vg2 = vg;
  vg2.at(40, 3) += 1.0;
  Graph<double> g3;
  CHECK(changed_rows(base, m.decode(g3, g3.constant(vm), g3.constant(vg2)).value()) == std::set<std::size_t>{40});

  m.zero_output_head();
  Graph<double> g4;
  for (auto v : m.decode(g4, g4.constant(vm), g4.constant(vg)).value().data()) CHECK(v == 0.0);
}

TEST_CASE("gnn step and rollout are persistence under a zero head") {
  auto t = tiny_gnn(3, 6, 2, 7, true);
  std::mt19937_64 rng(8);
  auto w = random_window(t.spec, 3, 6, 12, rng);
  const Timestamp t0 = parse_iso8601("2015-03-20T06:00:00Z");
  ForcingProvider prov = [&](Timestamp ts) { return forcing_for(t.grid, t.spec, ts); };
  Forecaster<double> fc(*t.model, unit_normalizer(3), prov, 900);

  auto next = fc.step(w, t0 + 900);
  const auto forcing = prov(t0 + 900);
  for (std::size_t n = 0; n < 72; ++n) {
    CHECK(next[n] == w.back()[n]);
    CHECK(next[72 + n] == w.back()[72 + n]);
    CHECK(next[144 + n] == static_cast<double>(forcing[n]));
  }
  auto one = fc.rollout(w, t0, 1);
  CHECK(one[0].identical(next));

  auto roll = fc.rollout(w, t0, 12);
  auto pers = persistence_forecast(w, t.spec, prov, t0, 900, 12);
  REQUIRE(roll.size() == 12);
  for (std::size_t k = 0; k < 12; ++k) CHECK(roll[k].identical(pers[k]));

  // A trained head moves away from persistence but keeps the forcing rows.
  auto r = tiny_gnn(3, 6, 2, 7, false);
  Forecaster<double> fr(*r.model, unit_normalizer(3), prov, 900);
  auto roll2 = fr.rollout(w, t0, 4);
  CHECK_FALSE(roll2[0].identical(pers[0]));
  for (std::size_t k = 0; k < 4; ++k) {
    const auto f = prov(t0 + 900 * static_cast<Timestamp>(k + 1));
    for (std::size_t n = 0; n < 72; ++n) CHECK(roll2[k][144 + n] == static_cast<double>(f[n]));
  }

  // k = 1 equals one step call for a nonzero model too.
  CHECK(fr.rollout(w, t0, 1)[0].identical(fr.step(w, t0 + 900)));

  r.model->params().get("head.b").value[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    fr.rollout(w, t0, 3);
    CHECK(false);
  } catch (const RolloutError& e) {
    CHECK(std::string(e.what()).find("'kp' at step 1") != std::string::npos);
  }
}

TEST_CASE("gnn eval mode is deterministic, train mode applies dropout") {
  auto t = tiny_gnn(2, 6, 2, 9);
  t.model = std::make_unique<GnnModel<double>>(
      [&] {
        auto c = t.config;
        c.dropout = 0.5;
        return c;
      }(),
      t.spec, 6, 12, Tensor<double>({72, 4}, 0.3), GnnGraphs::build(t.grid, build_multimesh(1), 0.6));
  std::mt19937_64 rng(10);
  auto w = random_window(t.spec, 2, 6, 12, rng);
  auto f = random_tensor({1, 6, 12}, rng);
  Graph<double> a, b, c(true, 1);
  auto ya = t.model->forward(a, w, f).value();
  auto yb = t.model->forward(b, w, f).value();
  auto yc = t.model->forward(c, w, f).value();
  CHECK(ya.identical(yb));
  CHECK_FALSE(ya.identical(yc));
}

TEST_CASE("gnn longitudinal coherence") {
  auto spec = make_channel_spec(2.0, {"kp"}, {"sun_zenith_cos"}, {});
  GnnConfig c;
  c.mesh_level = 2;
  c.latent = 8;
  c.processor_layers = 2;
  c.context_len = 2;
  c.dropout = 0.0;
  c.zero_head = false;
  c.seed = 11;
  const std::size_t H = 9, W = 18;
  LatLonGrid grid(H, W);
  auto mesh = build_multimesh(2);
  auto rotated = mesh;
  for (auto& v : rotated.vertices) v = {-v[0], -v[1], v[2]};  // 180 degrees about the pole

  std::mt19937_64 rng(12);
  auto statics = random_static(H * W, 4, rng);
  auto roll = [&](const Tensor<double>& a) {
    Tensor<double> out(a.shape());
    const std::size_t C = a.dim(0);
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t col = 0; col < W; ++col)
          out[(ch * H + r) * W + (col + W / 2) % W] = a[(ch * H + r) * W + col];
    return out;
  };
  Tensor<double> statics_rolled({H * W, 4});
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t col = 0; col < W; ++col)
      for (std::size_t s = 0; s < 4; ++s)
        statics_rolled.at(r * W + (col + W / 2) % W, s) = statics.at(r * W + col, s);

  GnnModel<double> a(c, spec, H, W, statics, GnnGraphs::build(grid, mesh, 0.6));
  GnnModel<double> b(c, spec, H, W, statics_rolled, GnnGraphs::build(grid, rotated, 0.6));
  auto w = random_window(spec, 2, H, W, rng);
  auto f = random_tensor({1, H, W}, rng);
  std::vector<Tensor<double>> wr;
  for (auto& fr : w) wr.push_back(roll(fr));
  Graph<double> ga, gb;
  auto ya = a.forward(ga, w, f).value();
  auto yb = b.forward(gb, wr, roll(f)).value();
  auto ya_rolled = roll(ya);
  double worst = 0;
  for (std::size_t i = 0; i < ya.size(); ++i) worst = std::max(worst, std::abs(ya_rolled[i] - yb[i]));
  CHECK(worst <= 1e-4);
  MESSAGE("max deviation after 180 degree rotation: " << worst);
}

TEST_CASE("gnn gradients") {
  auto t = tiny_gnn(2, 4, 1, 13);
  std::mt19937_64 rng(14);
  auto w = random_window(t.spec, 2, 6, 12, rng);
  auto f = random_tensor({1, 6, 12}, rng);
  auto& model = *t.model;
  auto report = check_param_gradients(
      "gnn", [&](Graph<double>& g, ParamStore<double>&) { return project(model.forward(g, w, f), 15); },
      model.params(), 1e-5, 1e-4);
  append_gradcheck_debug(report);
  CHECK(report.passed());
  MESSAGE("gnn max relative error " << report.max_rel_error << " over " << report.checked << " elements");

  // No dead components: every parameter tensor gets a nonzero gradient.
  model.params().zero_grad();
  Graph<double> g(true, 3);
  g.backward(project(model.forward(g, w, f), 16));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    double norm = 0;
    for (auto v : p.grad.data()) norm += v * v;
    INFO(p.name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("gnn desk-scale rollout timing") {
  SynthConfig sc;
  sc.days = 1;
  auto files = synth_dataset(sc);
  auto spec = make_channel_spec(2.0, synth_driver_names(), astro::forcing_channel_names(), astro::mag_channel_names());
  auto model = make_model<double>("gnn", {{"mesh_level", 3}, {"latent", 32}, {"processor_layers", 6}}, spec,
                                  files.data);
  FrameAssembler fa(files.data, spec);
  std::vector<std::size_t> idx(48);
  std::iota(idx.begin(), idx.end(), 0);
  auto norm = Normalizer::fit(fa, idx);
  std::vector<Tensor<double>> w;
  for (std::size_t i = 0; i < 8; ++i) w.push_back(fa.frame(i).cast<double>());
  Forecaster<double> fc(*model, norm, [&](Timestamp ts) { return fa.forcing(ts); }, 900);
  const auto start = std::chrono::steady_clock::now();
  auto out = fc.rollout(w, files.data.times[7], 48);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(out.size() == 48);
  CHECK(secs < 10.0);
  MESSAGE("48-step rollout on 18x36, level-3 multimesh: " << secs << " s");
}

namespace {

std::unique_ptr<LstmModel<double>> tiny_lstm(const ChannelSpec& spec, std::size_t H, std::size_t W, std::size_t S,
                                             LstmConfig c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return std::make_unique<LstmModel<double>>(c, spec, H, W, random_static(H * W, S, rng));
}

LstmConfig small_lstm_config() {
  LstmConfig c;
  c.encoder_layers = 3;
  c.latent = 5;
  c.context_len = 2;
  c.dropout = 0.0;
  c.base_channels = 2;
  c.max_channels = 4;
  c.zero_head = false;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("lstm encoder") {
  auto spec = make_channel_spec(1.0, {"kp"}, {}, {});
  auto c = small_lstm_config();
  auto m = tiny_lstm(spec, 9, 16, 0, c, 1);
  std::mt19937_64 rng(22);
  Graph<double> g;
  CHECK(m->encode_frame(g, random_tensor({2, 9, 16}, rng)).shape() == Shape{1, 5});

  for (std::size_t i = 0; i < m->params().size(); ++i)
    if (m->params()[i].name.ends_with(".b")) m->params()[i].value.fill(0.0);
  for (auto v : m->encode_frame(g, Tensor<double>({2, 9, 16})).value().data()) CHECK(v == 0.0);

  // Without downsampling, a one-cell longitude roll leaves the pooled latent unchanged.
  c.max_downsamples = 0;
  auto flat = tiny_lstm(spec, 9, 16, 0, c, 2);
  auto frame = random_tensor({2, 9, 16}, rng);
  Tensor<double> rolled(frame.shape());
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 0; r < 9; ++r)
      for (std::size_t col = 0; col < 16; ++col) rolled.at(ch, r, (col + 1) % 16) = frame.at(ch, r, col);
  auto za = flat->encode_frame(g, frame).value();
  auto zb = flat->encode_frame(g, rolled).value();
  for (std::size_t k = 0; k < za.size(); ++k) CHECK(std::abs(za[k] - zb[k]) <= 1e-5);

  CHECK_THROWS_AS(tiny_lstm(spec, 2, 16, 0, c, 3), ConfigError);
  c.latent = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("lstm decoder shapes and state") {
  auto spec = make_channel_spec(1.0, {"kp"}, {"sun_zenith_cos"}, {});
  for (auto [H, W] : std::vector<std::pair<std::size_t, std::size_t>>{{18, 36}, {7, 13}, {5, 9}, {6, 12}, {45, 90}}) {
    LstmConfig c = small_lstm_config();
    c.encoder_layers = 6;
    auto m = tiny_lstm(spec, H, W, 4, c, 4);
    std::mt19937_64 rng(23);
    Graph<double> g;
    auto y = m->forward(g, random_window(spec, 2, H, W, rng), random_tensor({1, H, W}, rng));
    CHECK(y.shape() == Shape{2, H, W});
  }

  auto m = tiny_lstm(spec, 6, 12, 4, small_lstm_config(), 5);
  std::mt19937_64 rng(24);
  auto w = random_window(spec, 2, 6, 12, rng);
  auto f = random_tensor({1, 6, 12}, rng);
  Graph<double> g;
  auto fresh = m->forward(g, w, f).value();
  CHECK(m->forward(g, w, f).value().identical(fresh));
  LstmModel<double>::State carried{g.constant(random_tensor({1, 5}, rng)), g.constant(random_tensor({1, 5}, rng))};
  auto with_state = m->forward_from(g, w, f, carried).value();
  CHECK_FALSE(with_state.identical(fresh));
}

TEST_CASE("lstm parameter count") {
  // 18x36 grid, 2 frame channels + 4 static maps, six layers: strides 2,2,2,1,1,1
  // with channels 8,16,32,32,32,32 (cap 32), latent 16, no forcings, 2 outputs.
  auto spec = make_channel_spec(1.0, {"kp"}, {}, {});
  LstmConfig c;
  c.latent = 16;
  c.base_channels = 8;
  c.max_channels = 32;
  auto m = tiny_lstm(spec, 18, 36, 4, c, 6);
  const std::size_t chans[] = {6, 8, 16, 32, 32, 32, 32};
  std::size_t expect = 0;
  for (int i = 0; i < 6; ++i) expect += chans[i + 1] * chans[i] * 9 + chans[i + 1];  // encoder
  expect += 32 * 16 + 16;                                                            // projection
  expect += 2 * 16 * 64 + 64;                                                        // lstm cell
  expect += 16 * (32 * 3 * 5) + 32 * 3 * 5;                                          // latent to 3x5 maps
  for (int i = 5; i >= 0; --i) {
    const std::size_t out = i == 0 ? 8 : chans[i];
    expect += chans[i + 1] * out * 9 + out;  // decoder
  }
  expect += 8 * 2 * 9 + 2;  // head
  CHECK(m->params().count() == expect);
  CHECK(expect == 79050);
  const auto& st = m->stages();
  REQUIRE(st.size() == 6);
  CHECK(st[2].out_h == 3);
  CHECK(st[2].out_w == 5);
  CHECK(st[3].stride == 1);
}

TEST_CASE("lstm zero head is persistence") {
  auto spec = make_channel_spec(20.0, {"kp"}, {"sun_zenith_cos", "local_time_cos"}, {});
  auto c = small_lstm_config();
  c.zero_head = true;
  auto m = tiny_lstm(spec, 6, 12, 4, c, 7);
  LatLonGrid grid(6, 12);
  ForcingProvider prov = [&](Timestamp ts) { return forcing_for(grid, spec, ts); };
  std::mt19937_64 rng(25);
  auto w = random_window(spec, 2, 6, 12, rng);
  Forecaster<double> fc(*m, unit_normalizer(4), prov, 900);
  const Timestamp t0 = parse_iso8601("2016-01-01");
  auto roll = fc.rollout(w, t0, 10);
  auto pers = persistence_forecast(w, spec, prov, t0, 900, 10);
  for (std::size_t k = 0; k < 10; ++k) CHECK(roll[k].identical(pers[k]));
  CHECK(fc.rollout(w, t0, 1)[0].identical(fc.step(w, t0 + 900)));
}

TEST_CASE("lstm gradients") {
  auto spec = make_channel_spec(20.0, {"kp"}, {}, {});
  auto c = small_lstm_config();
  auto m = tiny_lstm(spec, 6, 12, 0, c, 8);
  std::mt19937_64 rng(26);
  auto w = random_window(spec, 2, 6, 12, rng);
  Tensor<double> f({0, 6, 12});
  auto report = check_param_gradients(
      "lstm", [&](Graph<double>& g, ParamStore<double>&) { return project(m->forward(g, w, f), 27); }, m->params(),
      1e-5, 1e-4);
  append_gradcheck_debug(report);
  CHECK(report.passed());
  MESSAGE("lstm max relative error " << report.max_rel_error << " over " << report.checked << " elements");

  m->params().zero_grad();
  Graph<double> g(true, 1);
  g.backward(project(m->forward(g, w, f), 28));
  for (std::size_t i = 0; i < m->params().size(); ++i) {
    double norm = 0;
    for (auto v : m->params()[i].grad.data()) norm += v * v;
    INFO(m->params()[i].name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("checkpoint roundtrip") {
  SynthConfig sc;
  sc.days = 1;
  sc.n_lat = 9;
  sc.n_lon = 18;
  auto files = synth_dataset(sc);
  auto spec = make_channel_spec(2.0, {"kp", "f107"}, {"sun_zenith_cos"}, {"maglat"});
  FrameAssembler fa(files.data, spec);
  auto norm = Normalizer::fit(fa, {0, 1, 2, 3});
  const auto dir = std::filesystem::temp_directory_path() / ("ioncast_ckpt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);

  for (std::string arch : {"gnn", "lstm"}) {
    nlohmann::json cfg = arch == "gnn" ? nlohmann::json{{"mesh_level", 2}, {"latent", 8}, {"processor_layers", 2},
                                                        {"context_len", 2}, {"zero_head", false}}
                                       : nlohmann::json{{"latent", 8}, {"context_len", 2}, {"zero_head", false}};
    auto model = make_model<float>(arch, cfg, spec, files.data);
    AdamState<float> adam;
    model->params().zero_grad();
    for (std::size_t i = 0; i < model->params().size(); ++i) model->params()[i].grad.fill(0.01f);
    adam_step(model->params(), adam);
    const auto path = (dir / (arch + ".ckpt")).string();
    save_checkpoint(path, make_checkpoint(*model, norm, &adam, {{"step", 1}}));

    auto ck = load_checkpoint(path);
    CHECK(ck.arch == arch);
    CHECK(ck.meta["step"] == 1);
    CHECK(ck.spec == spec);
    CHECK(ck.normalizer.mean == norm.mean);
    auto back = model_from_checkpoint<float>(ck, files.data);
    for (std::size_t i = 0; i < model->params().size(); ++i)
      CHECK(back->params()[i].value.identical(model->params()[i].value));
    auto st = load_adam<float>(ck);
    CHECK(st.t == 1);
    CHECK(st.m.at("head.b").identical(adam.m.at("head.b")));

    std::vector<Tensor<float>> w;
    for (std::size_t i = 0; i < 2; ++i) w.push_back(fa.frame(i));
    ForcingProvider prov = [&](Timestamp ts) { return fa.forcing(ts); };
    Forecaster<float> f1(*model, norm, prov, 900), f2(*back, norm, prov, 900);
    CHECK(f1.step(w, files.data.times[2]).identical(f2.step(w, files.data.times[2])));

    CHECK_THROWS_AS(require_same_spec(ck, make_channel_spec(2.0, {"kp"}, {"sun_zenith_cos"}, {"maglat"})),
                    ConfigError);
    require_same_spec(ck, spec);

    // Truncation and damage are rejected.
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << b;
    };
    write(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    write(bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  CHECK_THROWS_AS(make_model<float>("transformer", {}, spec, files.data), ConfigError);
  CHECK_THROWS_AS(make_model<float>("gnn", {{"layers", 3}}, spec, files.data), ConfigError);
  std::filesystem::remove_all(dir);
}
