#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ioncast/adam.hpp"
#include "ioncast/gradcheck.hpp"
#include "ioncast/ops.hpp"

using namespace ioncast;
using namespace ioncast::oracle;

namespace {

// Independent oracle: naive triple loop.
Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

// Independent oracle: centered sliding window with explicit wrap/zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, std::size_t s) {
  const long C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const long O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const long Ho = (H + s - 1) / s, Wo = (W + s - 1) / s;
  const long rh = kh / 2, rw = kw / 2;
  Tensor<double> y({static_cast<std::size_t>(O), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (long o = 0; o < O; ++o)
    for (long i = 0; i < Ho; ++i)
      for (long j = 0; j < Wo; ++j) {
        double acc = 0.0;
        for (long c = 0; c < C; ++c)
          for (long dy = -rh; dy <= rh; ++dy)
            for (long dx = -rw; dx <= rw; ++dx) {
              const long row = i * static_cast<long>(s) + dy;
              if (row < 0 || row >= H) continue;
              long col = (j * static_cast<long>(s) + dx) % W;
              if (col < 0) col += W;
              acc +=
                     k[((o * C + c) * kh + (dy + rh)) * kw + (dx + rw)] * x.at(c, row, col);
            }
        y.at(o, i, j) = acc;
      }
  return y;
}

double inner(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("matmul examples") {
  Graph<double> g;
  SUBCASE("identity") {
    std::mt19937_64 rng(1);
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    auto b = random_tensor({3, 4}, rng);
    auto out = ops::matmul(g.constant(eye), g.constant(b));
    CHECK(out.value().identical(b));
  }
  SUBCASE("hand arithmetic") {
    auto out = ops::matmul(g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})), g.constant(Tensor<double>({2, 1}, {1, 1})));
    CHECK(out.value()[0] == 3.0);
    CHECK(out.value()[1] == 7.0);
  }
  SUBCASE("triple-loop oracle") {
    std::mt19937_64 rng(2);
    auto a = random_tensor({5, 7}, rng);
    auto b = random_tensor({7, 3}, rng);
    auto expect = matmul_oracle(a, b);
    auto out = ops::matmul(g.constant(a.cast<float>().cast<double>()), g.constant(b));
    Graph<float> gf;
    auto outf = ops::matmul(gf.constant(a.cast<float>()), gf.constant(b.cast<float>()));
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(outf.value()[i] - expect[i]) <= 1e-6 * std::max(1.0, std::abs(expect[i])));
    }
  }
  SUBCASE("shape mismatch names both shapes") {
    auto a = g.constant(Tensor<double>({2, 3}));
    auto b = g.constant(Tensor<double>({2, 3}));
    try {
      ops::matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("[2x3] and [2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("conv2d_circular examples") {
  Graph<double> g;
  SUBCASE("identity kernel") {
    std::mt19937_64 rng(3);
    auto x = random_tensor({1, 4, 5}, rng);
    auto y = ops::conv2d_circular(g.constant(x), g.constant(Tensor<double>({1, 1, 1, 1}, {1.0})), 1);
    CHECK(y.value().identical(x));
  }
  SUBCASE("wrap picks the left neighbour") {
    auto x = g.constant(Tensor<double>({1, 1, 4}, {10, 20, 30, 40}));
    auto y = ops::conv2d_circular(x, g.constant(Tensor<double>({1, 1, 1, 3}, {1, 0, 0})), 1);
    CHECK(y.value().storage() == std::vector<double>{40, 10, 20, 30});
  }
  SUBCASE("sliding-window oracle, stride 2") {
    std::mt19937_64 rng(4);
    auto x = random_tensor({2, 8, 12}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    auto y = ops::conv2d_circular(g.constant(x), g.constant(k), 2);
    auto expect = conv_oracle(x, k, 2);
    REQUIRE(y.shape() == expect.shape());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y.value()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  SUBCASE("output extents round up") {
    auto y = ops::conv2d_circular(g.constant(Tensor<double>({1, 5, 7})), g.constant(Tensor<double>({2, 1, 3, 3})), 2);
    CHECK(y.shape() == Shape{2, 3, 4});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ops::conv2d_circular(g.constant(Tensor<double>({1, 4, 2})), g.constant(Tensor<double>({1, 1, 3, 3})), 1),
                    DimensionError);
    CHECK_THROWS_AS(ops::conv2d_circular(g.constant(Tensor<double>({1, 4, 4})), g.constant(Tensor<double>({1, 1, 2, 2})), 1),
                    DimensionError);
    CHECK_THROWS_AS(ops::conv2d_circular(g.constant(Tensor<double>({2, 4, 4})), g.constant(Tensor<double>({1, 1, 3, 3})), 1),
                    DimensionError);
  }
}

TEST_CASE("upsample_bilinear examples") {
  Graph<double> g;
  SUBCASE("constant stays constant") {
    auto y = ops::upsample_bilinear(g.constant(Tensor<double>({2, 3, 4}, 2.5)), 3);
    CHECK(y.shape() == Shape{2, 9, 12});
    for (auto v : y.value().data()) CHECK(v == 2.5);
  }
  SUBCASE("factor 1 is identity") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({2, 3, 4}, rng);
    CHECK(ops::upsample_bilinear(g.constant(x), 1).value().identical(x));
  }
  SUBCASE("closed-form 2x2 case") {
    // out[i][j] = 2 R(i) + R(j) with R = {0, 0.25, 0.75, 1} from the
    // cell-center source coordinate (i + 0.5) / 2 - 0.5 clamped to [0, 1].
    auto y = ops::upsample_bilinear(g.constant(Tensor<double>({1, 2, 2}, {0, 1, 2, 3})), 2);
    const std::vector<double> expect{0,   0.25, 0.75, 1,   0.5, 0.75, 1.25, 1.5,
                                     1.5, 1.75, 2.25, 2.5, 2,   2.25, 2.75, 3};
    CHECK(y.value().storage() == expect);
  }
  SUBCASE("factor < 1 rejected") {
    CHECK_THROWS_AS(ops::upsample_bilinear(g.constant(Tensor<double>({1, 2, 2})), 0), ArgumentError);
  }
}

TEST_CASE("conv2d_transposed examples") {
  Graph<double> g;
  SUBCASE("adjoint identity on random 4x6 inputs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      for (std::size_t stride : {1u, 2u}) {
        auto x = random_tensor({2, 4, 6}, rng);
        auto k = random_tensor({3, 2, 3, 3}, rng);
        auto y = random_tensor({3, (4 + stride - 1) / stride, (6 + stride - 1) / stride}, rng);
        auto cx = ops::conv2d_circular(g.constant(x), g.constant(k), stride).value();
        auto ty = ops::conv2d_transposed(g.constant(y), g.constant(k), stride, 4, 6).value();
        CHECK(std::abs(inner(cx, y) - inner(x, ty)) < 1e-5);
      }
    }
  }
  SUBCASE("unit kernel stride 1 is identity") {
    std::mt19937_64 rng(6);
    auto y = random_tensor({1, 3, 5}, rng);
    auto x = ops::conv2d_transposed(g.constant(y), g.constant(Tensor<double>({1, 1, 1, 1}, {1.0})), 1, 3, 5);
    CHECK(x.value().identical(y));
  }
  SUBCASE("stride 2 ones kernel expands each pixel to a block") {
    auto x = ops::conv2d_transposed(g.constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4})),
                                    g.constant(Tensor<double>({1, 1, 2, 2}, 1.0)), 2, 4, 4);
    const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(x.value().storage() == expect);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ops::conv2d_transposed(g.constant(Tensor<double>({1, 3, 3})),
                                           g.constant(Tensor<double>({1, 1, 3, 3})), 2, 4, 4),
                    DimensionError);
  }
}

TEST_CASE("lstm_cell examples") {
  Graph<double> g;
  const std::size_t d = 3, k = 2;
  auto zero_weights = [&] {
    return ops::LstmWeights<double>{g.constant(Tensor<double>({d, 4 * k})), g.constant(Tensor<double>({k, 4 * k})),
                                    g.constant(Tensor<double>({4 * k}))};
  };
  SUBCASE("zero weights: gates one half, candidate zero") {
    auto c = Tensor<double>({1, k}, {0.8, -1.4});
    auto [h1, c1] = ops::lstm_cell(g.constant(Tensor<double>({1, d}, {1, 2, 3})), g.constant(Tensor<double>({1, k}, {0.3, 0.1})),
                                   g.constant(c), zero_weights());
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(c1.value()[i] == doctest::Approx(0.5 * c[i]));
      CHECK(h1.value()[i] == doctest::Approx(0.5 * std::tanh(0.5 * c[i])));
    }
  }
  SUBCASE("all zero") {
    auto [h1, c1] = ops::lstm_cell(g.constant(Tensor<double>({1, d})), g.constant(Tensor<double>({1, k})),
                                   g.constant(Tensor<double>({1, k})), zero_weights());
    for (auto v : h1.value().data()) CHECK(v == 0.0);
    for (auto v : c1.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("scalar reference") {
    std::mt19937_64 rng(7);
    auto x = random_tensor({1, d}, rng), h = random_tensor({1, k}, rng), c = random_tensor({1, k}, rng);
    auto wx = random_tensor({d, 4 * k}, rng), wh = random_tensor({k, 4 * k}, rng), b = random_tensor({4 * k}, rng);
    auto [h1, c1] = ops::lstm_cell(g.constant(x), g.constant(h), g.constant(c),
                                   {g.constant(wx), g.constant(wh), g.constant(b)});
    for (std::size_t u = 0; u < k; ++u) {
      double z[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t col = gate * k + u;
        double acc = b[col];
        for (std::size_t i = 0; i < d; ++i) acc += x[i] * wx.at(i, col);
        for (std::size_t i = 0; i < k; ++i) acc += h[i] * wh.at(i, col);
        z[gate] = acc;
      }
      const double cn = sigmoid_ref(z[1]) * c[u] + sigmoid_ref(z[0]) * std::tanh(z[3]);
      const double hn = sigmoid_ref(z[2]) * std::tanh(cn);
      CHECK(std::abs(c1.value()[u] - cn) < 1e-6);
      CHECK(std::abs(h1.value()[u] - hn) < 1e-6);
    }
  }
  SUBCASE("shape mismatch") {
    auto w = zero_weights();
    CHECK_THROWS_AS(ops::lstm_cell(g.constant(Tensor<double>({1, d + 1})), g.constant(Tensor<double>({1, k})),
                                   g.constant(Tensor<double>({1, k})), w),
                    DimensionError);
  }
}

TEST_CASE("scatter_sum examples") {
  Graph<double> g;
  SUBCASE("no edges") {
    std::vector<std::int32_t> idx;
    auto out = ops::scatter_sum(g.constant(Tensor<double>({0, 2})), idx, 3);
    CHECK(out.shape() == Shape{3, 2});
    for (auto v : out.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("hand sum") {
    // Rows 0 and 1 go to node 0, row 2 to node 1, node 2 is empty.
    std::vector<std::int32_t> idx{0, 0, 1};
    auto out = ops::scatter_sum(g.constant(Tensor<double>({3, 1}, {1, 2, 3})), idx, 3);
    CHECK(out.value().storage() == std::vector<double>{3, 3, 0});
  }
  SUBCASE("loop oracle") {
    std::mt19937_64 rng(8);
    auto v = random_tensor({50, 4}, rng);
    std::vector<std::int32_t> idx(50);
    std::uniform_int_distribution<int> pick(0, 9);
    for (auto& i : idx) i = pick(rng);
    auto out = ops::scatter_sum(g.constant(v), idx, 10);
    Tensor<double> expect({10, 4});
    for (std::size_t e = 0; e < 50; ++e)
      for (std::size_t j = 0; j < 4; ++j) expect.at(idx[e], j) += v.at(e, j);
    CHECK(out.value().identical(expect));
  }
  SUBCASE("out of range names the edge") {
    std::vector<std::int32_t> idx{0, 5};
    try {
      ops::scatter_sum(g.constant(Tensor<double>({2, 1})), idx, 3);
      FAIL("expected IndexError");
    } catch (const IndexError& e) {
      CHECK(std::string(e.what()).find("edge 1") != std::string::npos);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Graph<double> g;
  auto ones = g.constant(Tensor<double>({4}, 1.0));
  auto zeros = g.constant(Tensor<double>({4}, 0.0));
  SUBCASE("constant vector") {
    auto y = ops::layer_norm(g.constant(Tensor<double>({1, 4}, 3.0)), ones, zeros);
    for (auto v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("zero gain gives bias") {
    std::mt19937_64 rng(9);
    auto bias = random_tensor({4}, rng);
    auto y = ops::layer_norm(g.constant(random_tensor({2, 4}, rng)), zeros, g.constant(bias));
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.value().at(r, j) == bias[j]);
  }
  SUBCASE("moments") {
    std::mt19937_64 rng(10);
    const std::size_t d = 64;
    auto y = ops::layer_norm(g.constant(random_tensor({1, d}, rng, -3, 5)), g.constant(Tensor<double>({d}, 1.0)),
                             g.constant(Tensor<double>({d}, 0.0)));
    double m = 0, v = 0;
    for (auto x : y.value().data()) m += x;
    m /= d;
    for (auto x : y.value().data()) v += (x - m) * (x - m);
    v /= d;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
}

TEST_CASE("backward contract") {
  SUBCASE("loss is the parameter") {
    ParamStore<double> ps;
    auto& p = ps.add("p", Tensor<double>::scalar(3.0));
    Graph<double> g;
    g.backward(g.parameter(p));
    CHECK(p.grad[0] == 1.0);
  }
  SUBCASE("independent parameter gets zero") {
    ParamStore<double> ps;
    auto& p = ps.add("p", Tensor<double>::scalar(3.0));
    auto& q = ps.add("q", Tensor<double>::scalar(2.0));
    ps.zero_grad();
    Graph<double> g;
    g.parameter(q);
    auto loss = ops::scale(g.parameter(p), 4.0);
    g.backward(loss);
    CHECK(p.grad[0] == 4.0);
    CHECK(q.grad[0] == 0.0);
  }
  SUBCASE("non-scalar loss rejected") {
    Graph<double> g;
    CHECK_THROWS_AS(g.backward(g.variable(Tensor<double>({2}))), ArgumentError);
  }
  SUBCASE("duplicate parameter names rejected") {
    ParamStore<float> ps;
    ps.add("w", Tensor<float>({1}));
    CHECK_THROWS_AS(ps.add("w", Tensor<float>({1})), ArgumentError);
  }
}

TEST_CASE("finite-difference gradients of every primitive") {
  const auto cases = primitive_gradcheck_cases();
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      std::vector<Tensor<double>> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
      worst = std::max(worst, check_gradients(c.name, c.fn, inputs).max_rel_error);
    }
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("conv2d_circular is equivariant to longitude shifts (bit-exact)") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor({2, 6, 10}, rng);
    auto k = random_tensor({3, 2, 3, 5}, rng);
    const std::size_t shift = 1 + trial;
    Tensor<double> xs(x.shape());
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 10; ++j) xs.at(c, i, (j + shift) % 10) = x.at(c, i, j);
    Graph<double> g;
    auto y = ops::conv2d_circular(g.constant(x), g.constant(k), 1).value();
    auto ys = ops::conv2d_circular(g.constant(xs), g.constant(k), 1).value();
    bool same = true;
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 10; ++j) same = same && ys.at(o, i, (j + shift) % 10) == y.at(o, i, j);
    CHECK(same);
  }
}

TEST_CASE("scatter_sum is linear") {
  std::mt19937_64 rng(12);
  std::vector<std::int32_t> idx(40);
  std::uniform_int_distribution<int> pick(0, 7);
  for (auto& i : idx) i = pick(rng);
  for (int trial = 0; trial < 10; ++trial) {
    // Small integers keep the double arithmetic exact.
    std::uniform_int_distribution<int> val(-20, 20);
    Tensor<double> a({40, 3}), b({40, 3});
    for (auto& v : a.data()) v = val(rng);
    for (auto& v : b.data()) v = val(rng);
    Graph<double> g;
    auto lhs = ops::scatter_sum(ops::add(g.constant(a), g.constant(b)), idx, 8).value();
    auto rhs = ops::add(ops::scatter_sum(g.constant(a), idx, 8), ops::scatter_sum(g.constant(b), idx, 8)).value();
    CHECK(lhs.identical(rhs));

    Graph<float> gf;
    auto af = random_tensor({40, 3}, rng).cast<float>(), bf = random_tensor({40, 3}, rng).cast<float>();
    auto lf = ops::scatter_sum(ops::add(gf.constant(af), gf.constant(bf)), idx, 8).value();
    auto rf = ops::add(ops::scatter_sum(gf.constant(af), idx, 8), ops::scatter_sum(gf.constant(bf), idx, 8)).value();
    for (std::size_t i = 0; i < lf.size(); ++i) CHECK(std::abs(lf[i] - rf[i]) < 1e-6);
  }
}

TEST_CASE("replaying a recorded graph is bit-reproducible") {
  std::mt19937_64 rng(13);
  ParamStore<float> ps;
  ps.add("w", random_tensor({6, 4}, rng).cast<float>());
  ps.add("g", Tensor<float>({4}, 1.0f));
  ps.add("b", Tensor<float>({4}, 0.0f));
  auto x = random_tensor({5, 6}, rng).cast<float>();
  auto run = [&](Tensor<float>& out, std::vector<Tensor<float>>& grads) {
    ps.zero_grad();
    Graph<float> g(true, 42);
    auto h = ops::dropout(ops::swish(ops::matmul(g.constant(x), g.parameter(ps.get("w")))), 0.2);
    auto y = ops::layer_norm(h, g.parameter(ps.get("g")), g.parameter(ps.get("b")));
    auto loss = ops::mean(ops::mul(y, y));
    g.backward(loss);
    out = y.value();
    grads.clear();
    for (std::size_t i = 0; i < ps.size(); ++i) grads.push_back(ps[i].grad);
  };
  Tensor<float> o1, o2;
  std::vector<Tensor<float>> g1, g2;
  run(o1, g1);
  run(o2, g2);
  CHECK(o1.identical(o2));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i].identical(g2[i]));
}

TEST_CASE("adam_step") {
  SUBCASE("first step moves by lr against the gradient sign") {
    ParamStore<double> ps;
    auto& p = ps.add("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    p.grad = Tensor<double>({3}, {0.3, -4.0, 1e-3});
    AdamState<double> st;
    st.hyper.lr = 3e-4;
    adam_step(ps, st);
    CHECK(st.t == 1);
    CHECK(p.value[0] == doctest::Approx(1.0 - 3e-4).epsilon(1e-7));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 3e-4).epsilon(1e-7));
    CHECK(p.value[2] == doctest::Approx(0.5 - 3e-4).epsilon(1e-4));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamStore<float> ps;
    auto& p = ps.add("p", Tensor<float>({2}, {1.5f, -0.25f}));
    AdamState<float> st;
    adam_step(ps, st);
    CHECK(st.t == 1);
    CHECK(p.value[0] == 1.5f);
    CHECK(p.value[1] == -0.25f);
  }
  SUBCASE("three steps on a quadratic match the hand recursion") {
    // f(x) = (x - 3)^2, x0 = 0, lr = 0.1.
    ParamStore<double> ps;
    auto& p = ps.add("x", Tensor<double>::scalar(0.0));
    AdamState<double> st;
    st.hyper.lr = 0.1;
    long double x = 0, m = 0, v = 0;
    for (int t = 1; t <= 3; ++t) {
      p.grad[0] = 2.0 * (p.value[0] - 3.0);
      adam_step(ps, st);
      const long double g = 2.0L * (x - 3.0L);
      m = 0.9L * m + 0.1L * g;
      v = 0.999L * v + 0.001L * g * g;
      const long double mh = m / (1.0L - std::pow(0.9L, t));
      const long double vh = v / (1.0L - std::pow(0.999L, t));
      x -= 0.1L * mh / (std::sqrt(vh) + 1e-8L);
      CHECK(std::abs(p.value[0] - static_cast<double>(x)) < 1e-8);
    }
    CHECK(st.t == 3);
  }
  SUBCASE("non-finite gradient names the parameter") {
    ParamStore<float> ps;
    ps.add("ok", Tensor<float>({1}));
    auto& bad = ps.add("encoder.w", Tensor<float>({2}));
    bad.grad[1] = std::nanf("");
    AdamState<float> st;
    try {
      adam_step(ps, st);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("encoder.w") != std::string::npos);
    }
    CHECK(st.t == 0);
  }
}
