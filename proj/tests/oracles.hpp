#pragma once
// Reference implementations shared by the unit tests and the acceptance run.

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "ioncast/astro.hpp"
#include "ioncast/gradcheck.hpp"
#include "ioncast/iongrid.hpp"
#include "ioncast/mesh.hpp"
#include "ioncast/ops.hpp"

namespace ioncast::oracle {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Contracts an output with a fixed random tensor so every output element
// contributes to the scalar.
inline Var<double> project(Var<double> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto r = random_tensor(out.shape(), rng);
  return ops::sum(ops::mul(out, out.graph().constant(r)));
}

struct GradCase {
  const char* name;
  std::vector<Shape> shapes;
  GradCheckFn fn;
};

// Every differentiable primitive, on small random shapes.
inline std::vector<GradCase> primitive_gradcheck_cases() {
  static const std::vector<std::int32_t> gidx{2, 0, 1, 2, 2, 4};
  static const std::vector<std::int32_t> sidx{1, 0, 3, 1, 1, 2};
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto&, const auto& v) { return project(ops::matmul(v[0], v[1]), 1); }},
      {"transpose", {{3, 4}}, [](auto&, const auto& v) { return project(ops::transpose(v[0]), 2); }},
      {"add", {{2, 3}, {2, 3}}, [](auto&, const auto& v) { return project(ops::add(v[0], v[1]), 3); }},
      {"sub", {{2, 3}, {2, 3}}, [](auto&, const auto& v) { return project(ops::sub(v[0], v[1]), 4); }},
      {"mul", {{2, 3}, {2, 3}}, [](auto&, const auto& v) { return project(ops::mul(v[0], v[1]), 5); }},
      {"scale", {{5}}, [](auto&, const auto& v) { return project(ops::scale(v[0], -1.7), 6); }},
      {"add_row", {{3, 4}, {4}}, [](auto&, const auto& v) { return project(ops::add_row(v[0], v[1]), 7); }},
      {"add_channel", {{2, 3, 4}, {2}}, [](auto&, const auto& v) { return project(ops::add_channel(v[0], v[1]), 8); }},
      {"swish", {{3, 5}}, [](auto&, const auto& v) { return project(ops::swish(ops::scale(v[0], 3.0)), 9); }},
      {"sigmoid", {{3, 5}}, [](auto&, const auto& v) { return project(ops::sigmoid(ops::scale(v[0], 3.0)), 10); }},
      {"tanh", {{3, 5}}, [](auto&, const auto& v) { return project(ops::tanh(ops::scale(v[0], 2.0)), 11); }},
      {"layer_norm", {{3, 6}, {6}, {6}},
       [](auto&, const auto& v) { return project(ops::layer_norm(v[0], v[1], v[2]), 12); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [](auto&, const auto& v) { return project(ops::concat<double>({v[0], v[1]}, 0), 13); }},
      {"concat_cols", {{2, 3}, {2, 2}}, [](auto&, const auto& v) { return project(ops::concat<double>({v[0], v[1]}, 1), 14); }},
      {"slice_cols", {{3, 6}}, [](auto&, const auto& v) { return project(ops::slice_cols(v[0], 1, 4), 15); }},
      {"crop", {{2, 5, 6}}, [](auto&, const auto& v) { return project(ops::crop(v[0], 1, 3, 2, 4), 16); }},
      {"reshape", {{2, 6}}, [](auto&, const auto& v) { return project(ops::reshape(v[0], {3, 4}), 17); }},
      {"gather_rows", {{5, 3}}, [](auto&, const auto& v) { return project(ops::gather_rows(v[0], gidx), 18); }},
      {"scatter_sum", {{6, 3}}, [](auto&, const auto& v) { return project(ops::scatter_sum(v[0], sidx, 4), 19); }},
      {"conv2d_circular_s1", {{2, 5, 6}, {3, 2, 3, 3}},
       [](auto&, const auto& v) { return project(ops::conv2d_circular(v[0], v[1], 1), 20); }},
      {"conv2d_circular_s2", {{2, 5, 6}, {3, 2, 3, 3}},
       [](auto&, const auto& v) { return project(ops::conv2d_circular(v[0], v[1], 2), 21); }},
      {"conv2d_transposed", {{3, 3, 3}, {3, 2, 3, 3}},
       [](auto&, const auto& v) { return project(ops::conv2d_transposed(v[0], v[1], 2, 5, 6), 22); }},
      {"upsample_bilinear", {{2, 3, 4}}, [](auto&, const auto& v) { return project(ops::upsample_bilinear(v[0], 3), 23); }},
      {"global_avg_pool", {{3, 2, 4}}, [](auto&, const auto& v) { return project(ops::global_avg_pool(v[0]), 24); }},
      {"dropout", {{4, 5}},
       [](Graph<double>& g, const auto& v) {
         g.set_training(true);
         g.rng().seed(99);
         return project(ops::dropout(v[0], 0.3), 25);
       }},
      {"lstm_cell", {{2, 3}, {2, 2}, {2, 2}, {3, 8}, {2, 8}, {8}},
       [](auto&, const auto& v) {
         auto [h, c] = ops::lstm_cell(v[0], v[1], v[2], {v[3], v[4], v[5]});
         return ops::add(project(h, 26), project(c, 27));
       }},
      {"sum", {{3, 3}}, [](auto&, const auto& v) { return ops::sum(ops::mul(v[0], v[0])); }},
      {"mean", {{3, 3}}, [](auto&, const auto& v) { return ops::mean(ops::mul(v[0], v[0])); }},
      {"weighted_mse", {{3, 4}, {3, 4}},
       [](auto&, const auto& v) { return ops::weighted_mse(v[0], v[1], {2.0, 0.5, 1.0}); }},
  };
}

// Spherical excess via the Van Oosterom-Strackee formula.
inline double spherical_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double num = std::abs(dot(a, cross(b, c)));
  const double den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
  return 2.0 * std::atan2(num, den);
}

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline double wrap(double d) {
  d = std::fmod(d, 360.0);
  if (d <= -180) d += 360;
  if (d > 180) d -= 360;
  return d;
}

inline double rev(double d) {
  d = std::fmod(d, 360.0);
  return d < 0 ? d + 360.0 : d;
}

// Meeus' solar coordinates with apparent-longitude and obliquity corrections.
inline astro::SubPoint meeus_sun(Timestamp t) {
  const double d = julian_date(t) - 2451545.0;
  const double T = d / 36525.0;
  const double L0 = 280.46646 + 36000.76983 * T + 0.0003032 * T * T;
  const double M = (357.52911 + 35999.05029 * T - 0.0001537 * T * T) * kDeg;
  const double C = (1.914602 - 0.004817 * T - 0.000014 * T * T) * std::sin(M) + (0.019993 - 0.000101 * T) * std::sin(2 * M) +
                   0.000289 * std::sin(3 * M);
  const double omega = (125.04 - 1934.136 * T) * kDeg;
  const double lambda = (L0 + C - 0.00569 - 0.00478 * std::sin(omega)) * kDeg;
  const double eps0 = 23.0 + (26.0 + (21.448 - 46.8150 * T) / 60.0) / 60.0;
  const double eps = (eps0 + 0.00256 * std::cos(omega)) * kDeg;
  const double ra = std::atan2(std::cos(eps) * std::sin(lambda), std::cos(lambda)) / kDeg;
  const double dec = std::asin(std::sin(eps) * std::sin(lambda)) / kDeg;
  const double gmst = 280.46061837 + 360.98564736629 * d + 0.000387933 * T * T - T * T * T / 38710000.0;
  return {dec, wrap(ra - gmst), 0.0};
}

// Schlyter's lunar orbital elements with the main perturbation terms.
inline astro::SubPoint schlyter_moon(Timestamp t) {
  const double d = julian_date(t) - 2451543.5;
  const double N = rev(125.1228 - 0.0529538083 * d);
  const double i = 5.1454;
  const double w = rev(318.0634 + 0.1643573223 * d);
  const double a = 60.2666, e = 0.054900;
  const double M = rev(115.3654 + 13.0649929509 * d);
  const double ws = 282.9404 + 4.70935e-5 * d;
  const double Ms = rev(356.0470 + 0.9856002585 * d);
  const double Ls = rev(ws + Ms);

  double E = M + e / kDeg * std::sin(M * kDeg) * (1 + e * std::cos(M * kDeg));
  for (int k = 0; k < 20; ++k) {
    E = E - (E - e / kDeg * std::sin(E * kDeg) - M) / (1 - e * std::cos(E * kDeg));
  }
  const double x = a * (std::cos(E * kDeg) - e);
  const double y = a * std::sqrt(1 - e * e) * std::sin(E * kDeg);
  double r = std::hypot(x, y);
  const double v = std::atan2(y, x) / kDeg;
  const double vw = (v + w) * kDeg, Nr = N * kDeg, ir = i * kDeg;
  const double xe = r * (std::cos(Nr) * std::cos(vw) - std::sin(Nr) * std::sin(vw) * std::cos(ir));
  const double ye = r * (std::sin(Nr) * std::cos(vw) + std::cos(Nr) * std::sin(vw) * std::cos(ir));
  const double ze = r * std::sin(vw) * std::sin(ir);
  double lon = std::atan2(ye, xe) / kDeg;
  double lat = std::atan2(ze, std::hypot(xe, ye)) / kDeg;

  const double Lm = N + w + M, D = Lm - Ls, F = Lm - N;
  auto s = [](double deg) { return std::sin(deg * kDeg); };
  auto c = [](double deg) { return std::cos(deg * kDeg); };
  lon += -1.274 * s(M - 2 * D) + 0.658 * s(2 * D) - 0.186 * s(Ms) - 0.059 * s(2 * M - 2 * D) -
         0.057 * s(M - 2 * D + Ms) + 0.053 * s(M + 2 * D) + 0.046 * s(2 * D - Ms) + 0.041 * s(M - Ms) - 0.035 * s(D) -
         0.031 * s(M + Ms) - 0.015 * s(2 * F - 2 * D) + 0.011 * s(M - 4 * D);
  lat += -0.173 * s(F - 2 * D) - 0.055 * s(M - F - 2 * D) - 0.046 * s(M + F - 2 * D) + 0.033 * s(F + 2 * D) +
         0.017 * s(2 * M + F);
  r += -0.58 * c(M - 2 * D) - 0.46 * c(2 * D);

  const double ecl = (23.4393 - 3.563e-7 * d) * kDeg;
  const double xg = std::cos(lon * kDeg) * std::cos(lat * kDeg);
  const double yg = std::sin(lon * kDeg) * std::cos(lat * kDeg);
  const double zg = std::sin(lat * kDeg);
  const double yq = yg * std::cos(ecl) - zg * std::sin(ecl);
  const double zq = yg * std::sin(ecl) + zg * std::cos(ecl);
  const double ra = std::atan2(yq, xg) / kDeg;
  const double dec = std::atan2(zq, std::hypot(xg, yq)) / kDeg;

  const double ut = static_cast<double>(((t % 86400) + 86400) % 86400) / 3600.0;
  const double gmst = Ls + 180.0 + ut * 15.0;
  return {dec, wrap(ra - gmst), r * 6378.14 / 384400.0};
}

inline double great_circle_deg(double la1, double lo1, double la2, double lo2) {
  return arc_distance(unit_from_latlon(la1, lo1), unit_from_latlon(la2, lo2)) / kDeg;
}

inline GridStack random_stack(std::mt19937_64& rng, std::size_t n, std::size_t C, std::size_t H, std::size_t W,
                       bool raw_bits) {
  GridStack s;
  s.cadence = 900;
  for (std::size_t c = 0; c < C; ++c) s.channels.push_back("ch" + std::to_string(c) + "_\xc3\xa9");
  s.height = H;
  s.width = W;
  std::uniform_real_distribution<float> u(-100.0f, 100.0f);
  Timestamp t = 1441584000;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> f({C, H, W});
    for (auto& v : f.data()) {
      if (raw_bits) {
        const auto bits = static_cast<std::uint32_t>(rng());
        std::memcpy(&v, &bits, sizeof v);
      } else {
        v = u(rng);
      }
    }
    s.times.push_back(t);
    t += 900 * static_cast<Timestamp>(1 + rng() % 3);
    s.frames.push_back(std::move(f));
  }
  return s;
}

inline bool bit_equal(const GridStack& a, const GridStack& b) {
  if (a.cadence != b.cadence || a.channels != b.channels || a.height != b.height || a.width != b.width ||
      a.times != b.times || a.frames.size() != b.frames.size())
    return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    if (!a.frames[i].identical(b.frames[i])) return false;
  return true;
}

}  // namespace ioncast::oracle
