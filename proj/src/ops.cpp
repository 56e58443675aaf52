#include "ioncast/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace ioncast::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> as_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
template <typename T>
Eigen::Map<const RowMat<T>> as_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
T sigmoid_scalar(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Column lookup for circular padding: wrap[b * Wo + j] = (j * s + b - pad) mod W.
std::vector<std::size_t> wrap_table(std::size_t W, std::size_t Wo, std::size_t kw, std::size_t s) {
  std::vector<std::size_t> table(kw * Wo);
  const long pad = static_cast<long>((kw - 1) / 2);
  const long w = static_cast<long>(W);
  for (std::size_t b = 0; b < kw; ++b) {
    for (std::size_t j = 0; j < Wo; ++j) {
      long q = static_cast<long>(j * s + b) - pad;
      q = ((q % w) + w) % w;
      table[b * Wo + j] = static_cast<std::size_t>(q);
    }
  }
  return table;
}

struct BilinearTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<BilinearTap> bilinear_taps(std::size_t n, std::size_t factor) {
  std::vector<BilinearTap> taps(n * factor);
  for (std::size_t i = 0; i < n * factor; ++i) {
    double src = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > n - 1) i0 = n - 1;
    std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

namespace kernels {

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t Ho = ceil_div(H, stride), Wo = ceil_div(W, stride);
  const long ph = static_cast<long>((kh - 1) / 2);
  const auto wrap = wrap_table(W, Wo, kw, stride);
  Tensor<T> y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o) {
    T* yo = y.ptr() + o * Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
      const T* xc = x.ptr() + c * H * W;
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const T kv = k[((o * C + c) * kh + a) * kw + b];
          const std::size_t* cols = wrap.data() + b * Wo;
          for (std::size_t i = 0; i < Ho; ++i) {
            const long r = static_cast<long>(i * stride + a) - ph;
            if (r < 0 || r >= static_cast<long>(H)) continue;
            const T* row = xc + static_cast<std::size_t>(r) * W;
            T* yrow = yo + i * Wo;
            for (std::size_t j = 0; j < Wo; ++j) yrow[j] += kv * row[cols[j]];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv_adjoint(const Tensor<T>& y, const Tensor<T>& k, std::size_t stride, std::size_t H, std::size_t W) {
  const std::size_t O = k.dim(0), C = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t Ho = y.dim(1), Wo = y.dim(2);
  const long ph = static_cast<long>((kh - 1) / 2);
  const auto wrap = wrap_table(W, Wo, kw, stride);
  Tensor<T> x({C, H, W});
  for (std::size_t o = 0; o < O; ++o) {
    const T* yo = y.ptr() + o * Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
      T* xc = x.ptr() + c * H * W;
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const T kv = k[((o * C + c) * kh + a) * kw + b];
          const std::size_t* cols = wrap.data() + b * Wo;
          for (std::size_t i = 0; i < Ho; ++i) {
            const long r = static_cast<long>(i * stride + a) - ph;
            if (r < 0 || r >= static_cast<long>(H)) continue;
            T* row = xc + static_cast<std::size_t>(r) * W;
            const T* yrow = yo + i * Wo;
            for (std::size_t j = 0; j < Wo; ++j) row[cols[j]] += kv * yrow[j];
          }
        }
      }
    }
  }
  return x;
}

template <typename T>
Tensor<T> conv_kernel_grad(const Tensor<T>& x, const Tensor<T>& g, const Shape& kshape, std::size_t stride) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = kshape[0], kh = kshape[2], kw = kshape[3];
  const std::size_t Ho = g.dim(1), Wo = g.dim(2);
  const long ph = static_cast<long>((kh - 1) / 2);
  const auto wrap = wrap_table(W, Wo, kw, stride);
  Tensor<T> gk(kshape);
  for (std::size_t o = 0; o < O; ++o) {
    const T* go = g.ptr() + o * Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
      const T* xc = x.ptr() + c * H * W;
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const std::size_t* cols = wrap.data() + b * Wo;
          T acc{0};
          for (std::size_t i = 0; i < Ho; ++i) {
            const long r = static_cast<long>(i * stride + a) - ph;
            if (r < 0 || r >= static_cast<long>(H)) continue;
            const T* row = xc + static_cast<std::size_t>(r) * W;
            const T* grow = go + i * Wo;
            for (std::size_t j = 0; j < Wo; ++j) acc += grow[j] * row[cols[j]];
          }
          gk[((o * C + c) * kh + a) * kw + b] = acc;
        }
      }
    }
  }
  return gk;
}

}  // namespace kernels

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  }
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor<T> out({m, n});
  if (m && n && k) as_mat(out, m, n).noalias() = as_mat(A, m, k) * as_mat(B, k, n);
  return a.graph().record("matmul", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (!m || !n || !k) return;
    if (g.requires_grad(a.id())) {
      as_mat(g.grad(a.id()), m, k).noalias() += as_mat(G, m, n) * as_mat(g.value(b.id()), k, n).transpose();
    }
    if (g.requires_grad(b.id())) {
      as_mat(g.grad(b.id()), k, n).noalias() += as_mat(g.value(a.id()), m, k).transpose() * as_mat(G, m, n);
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& A = a.value();
  require_rank(A, 2, "transpose");
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return a.graph().record("transpose", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += G[j * m + i];
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  return a.graph().record("add", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(a.id())) accumulate(g.grad(a.id()), G);
    if (g.requires_grad(b.id())) accumulate(g.grad(b.id()), G);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return a.graph().record("sub", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(a.id())) accumulate(g.grad(a.id()), G);
    if (g.requires_grad(b.id())) {
      auto& gb = g.grad(b.id());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= G[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return a.graph().record("mul", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& A = g.value(a.id());
    const auto& Bv = g.value(b.id());
    if (g.requires_grad(a.id())) {
      auto& ga = g.grad(a.id());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * Bv[i];
    }
    if (g.requires_grad(b.id())) {
      auto& gb = g.grad(b.id());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += G[i] * A[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.graph().record("scale", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * G[i];
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.size() != A.dim(1)) {
    throw DimensionError("add_row: cannot broadcast " + shape_str(B.shape()) + " over rows of " +
                         shape_str(A.shape()));
  }
  const std::size_t m = A.dim(0), n = A.dim(1);
  Tensor<T> out = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[j];
  return a.graph().record("add_row", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(a.id())) accumulate(g.grad(a.id()), G);
    if (g.requires_grad(b.id())) {
      auto& gb = g.grad(b.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += G[i * n + j];
    }
  });
}

template <typename T>
Var<T> add_channel(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 3 || B.size() != A.dim(0)) {
    throw DimensionError("add_channel: cannot broadcast " + shape_str(B.shape()) + " over " + shape_str(A.shape()));
  }
  const std::size_t C = A.dim(0), HW = A.dim(1) * A.dim(2);
  Tensor<T> out = A;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < HW; ++p) out[c * HW + p] += B[c];
  return a.graph().record("add_channel", std::move(out), {a.id(), b.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    if (g.requires_grad(a.id())) accumulate(g.grad(a.id()), G);
    if (g.requires_grad(b.id())) {
      auto& gb = g.grad(b.id());
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < HW; ++p) gb[c] += G[c * HW + p];
    }
  });
}

template <typename T>
Var<T> swish(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = v * sigmoid_scalar(v);
  return a.graph().record("swish", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& X = g.value(a.id());
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const T s = sigmoid_scalar(X[i]);
      ga[i] += G[i] * (s + X[i] * s * (T{1} - s));
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  return a.graph().record("sigmoid", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& Y = g.value(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * Y[i] * (T{1} - Y[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  return a.graph().record("tanh", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    const auto& Y = g.value(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * (T{1} - Y[i] * Y[i]);
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  const auto& X = x.value();
  if (X.rank() == 0 || X.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  const std::size_t d = X.shape().back();
  const std::size_t rows = X.size() / d;
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " elements");
  }
  constexpr double eps = 1e-5;
  const auto& Gn = gain.value();
  const auto& Bs = bias.value();
  Tensor<T> out(X.shape());
  std::vector<T> xhat(X.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const T rs = static_cast<T>(1.0 / std::sqrt(var + eps));
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>((xr[j] - mu)) * rs;
      xhat[r * d + j] = xh;
      out[r * d + j] = Gn[j] * xh + Bs[j];
    }
  }
  return x.graph().record(
      "layer_norm", std::move(out), {x.id(), gain.id(), bias.id()},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, std::size_t self) {
        const auto& G = g.grad(self);
        const auto& Gv = g.value(gain.id());
        if (g.requires_grad(gain.id())) {
          auto& gg = g.grad(gain.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += G[r * d + j] * xhat[r * d + j];
        }
        if (g.requires_grad(bias.id())) {
          auto& gb = g.grad(bias.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += G[r * d + j];
        }
        if (g.requires_grad(x.id())) {
          auto& gx = g.grad(x.id());
          const T inv_d = T{1} / static_cast<T>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T m1{0}, m2{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = G[r * d + j] * Gv[j];
              m1 += dxh;
              m2 += dxh * xhat[r * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = G[r * d + j] * Gv[j];
              gx[r * d + j] += rstd[r] * (dxh - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no operands");
  const auto& first = parts.front().value();
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  if (axis == 0) {
    Shape tail(first.shape().begin() + 1, first.shape().end());
    std::size_t rows = 0;
    for (const auto& p : parts) {
      Shape t(p.shape().begin() + 1, p.shape().end());
      if (p.value().rank() != first.rank() || t != tail) {
        throw DimensionError("concat: incompatible shapes " + shape_str(first.shape()) + " and " +
                             shape_str(p.shape()));
      }
      rows += p.shape()[0];
    }
    Shape shape = first.shape();
    shape[0] = rows;
    Tensor<T> out(shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + off);
      off += p.value().size();
    }
    return parts.front().graph().record("concat0", std::move(out), ids,
                                        [=](Graph<T>& g, std::size_t self) {
                                          const auto& G = g.grad(self);
                                          for (std::size_t k = 0; k < ids.size(); ++k) {
                                            if (!g.requires_grad(ids[k])) continue;
                                            auto& gp = g.grad(ids[k]);
                                            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += G[offsets[k] + i];
                                          }
                                        });
  }
  if (axis != 1 || first.rank() != 2) throw ArgumentError("concat: axis 1 requires rank-2 operands");
  const std::size_t m = first.dim(0);
  std::vector<std::size_t> widths, offsets;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.shape()[0] != m) {
      throw DimensionError("concat: row mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    }
    offsets.push_back(n);
    widths.push_back(p.shape()[1]);
    n += p.shape()[1];
  }
  Tensor<T> out({m, n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& P = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(P.ptr() + i * widths[k], widths[k], out.ptr() + i * n + offsets[k]);
  }
  return parts.front().graph().record("concat1", std::move(out), ids, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.requires_grad(ids[k])) continue;
      auto& gp = g.grad(ids[k]);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += G[i * n + offsets[k] + j];
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& A = a.value();
  require_rank(A, 2, "slice_cols");
  if (begin > end || end > A.dim(1)) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(A.shape()));
  }
  const std::size_t m = A.dim(0), n = A.dim(1), w = end - begin;
  Tensor<T> out({m, w});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(A.ptr() + i * n + begin, w, out.ptr() + i * w);
  return a.graph().record("slice_cols", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += G[i * w + j];
  });
}

template <typename T>
Var<T> crop(Var<T> a, std::size_t h0, std::size_t h, std::size_t w0, std::size_t w) {
  const auto& A = a.value();
  require_rank(A, 3, "crop");
  const std::size_t C = A.dim(0), H = A.dim(1), W = A.dim(2);
  if (h0 + h > H || w0 + w > W) {
    throw DimensionError("crop: window exceeds " + shape_str(A.shape()));
  }
  Tensor<T> out({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(A.ptr() + (c * H + h0 + i) * W + w0, w, out.ptr() + (c * h + i) * w);
  return a.graph().record("crop", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& ga = g.grad(a.id());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[(c * H + h0 + i) * W + w0 + j] += G[(c * h + i) * w + j];
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(out), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    accumulate(g.grad(a.id()), g.grad(self));
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::int32_t> index) {
  const auto& X = x.value();
  require_rank(X, 2, "gather_rows");
  const std::size_t n = X.dim(0), d = X.dim(1), E = index.size();
  Tensor<T> out({E, d});
  for (std::size_t e = 0; e < E; ++e) {
    const auto r = index[e];
    if (r < 0 || static_cast<std::size_t>(r) >= n) {
      throw IndexError("gather_rows: edge " + std::to_string(e) + " index " + std::to_string(r) +
                       " outside [0, " + std::to_string(n) + ")");
    }
    std::copy_n(X.ptr() + static_cast<std::size_t>(r) * d, d, out.ptr() + e * d);
  }
  return x.graph().record("gather_rows", std::move(out), {x.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& gx = g.grad(x.id());
    for (std::size_t e = 0; e < E; ++e) {
      T* dst = gx.ptr() + static_cast<std::size_t>(index[e]) * d;
      const T* src = G.ptr() + e * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> scatter_sum(Var<T> values, std::span<const std::int32_t> receiver, std::size_t n) {
  const auto& V = values.value();
  require_rank(V, 2, "scatter_sum");
  const std::size_t E = V.dim(0), d = V.dim(1);
  if (receiver.size() != E) {
    throw DimensionError("scatter_sum: " + std::to_string(E) + " value rows but " +
                         std::to_string(receiver.size()) + " receiver indices");
  }
  Tensor<T> out({n, d});
  for (std::size_t e = 0; e < E; ++e) {
    const auto r = receiver[e];
    if (r < 0 || static_cast<std::size_t>(r) >= n) {
      throw IndexError("scatter_sum: edge " + std::to_string(e) + " targets node " + std::to_string(r) +
                       " outside [0, " + std::to_string(n) + ")");
    }
    T* dst = out.ptr() + static_cast<std::size_t>(r) * d;
    const T* src = V.ptr() + e * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  return values.graph().record("scatter_sum", std::move(out), {values.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& gv = g.grad(values.id());
    for (std::size_t e = 0; e < E; ++e) {
      const T* src = G.ptr() + static_cast<std::size_t>(receiver[e]) * d;
      T* dst = gv.ptr() + e * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> conv2d_circular(Var<T> input, Var<T> kernel, std::size_t stride) {
  const auto& X = input.value();
  const auto& K = kernel.value();
  require_rank(X, 3, "conv2d_circular input");
  require_rank(K, 4, "conv2d_circular kernel");
  if (stride < 1) throw ArgumentError("conv2d_circular: stride must be >= 1");
  if (K.dim(1) != X.dim(0)) {
    throw DimensionError("conv2d_circular: kernel " + shape_str(K.shape()) + " expects " +
                         std::to_string(K.dim(1)) + " input channels, input is " + shape_str(X.shape()));
  }
  if (K.dim(2) % 2 == 0 || K.dim(3) % 2 == 0) {
    throw DimensionError("conv2d_circular: kernel extents must be odd, got " + shape_str(K.shape()));
  }
  if (K.dim(3) > X.dim(2)) {
    throw DimensionError("conv2d_circular: kernel " + shape_str(K.shape()) + " larger than padded input " +
                         shape_str(X.shape()));
  }
  const std::size_t H = X.dim(1), W = X.dim(2);
  Tensor<T> out = kernels::conv_forward(X, K, stride);
  return input.graph().record(
      "conv2d_circular", std::move(out), {input.id(), kernel.id()}, [=](Graph<T>& g, std::size_t self) {
        const auto& G = g.grad(self);
        if (g.requires_grad(input.id())) {
          accumulate(g.grad(input.id()), kernels::conv_adjoint(G, g.value(kernel.id()), stride, H, W));
        }
        if (g.requires_grad(kernel.id())) {
          accumulate(g.grad(kernel.id()),
                     kernels::conv_kernel_grad(g.value(input.id()), G, g.value(kernel.id()).shape(), stride));
        }
      });
}

template <typename T>
Var<T> conv2d_transposed(Var<T> input, Var<T> kernel, std::size_t stride, std::size_t out_h, std::size_t out_w) {
  const auto& Y = input.value();
  const auto& K = kernel.value();
  require_rank(Y, 3, "conv2d_transposed input");
  require_rank(K, 4, "conv2d_transposed kernel");
  if (stride < 1) throw ArgumentError("conv2d_transposed: stride must be >= 1");
  if (out_h == 0 || out_w == 0) throw DimensionError("conv2d_transposed: empty output");
  if (K.dim(0) != Y.dim(0) || Y.dim(1) != ceil_div(out_h, stride) || Y.dim(2) != ceil_div(out_w, stride)) {
    throw DimensionError("conv2d_transposed: input " + shape_str(Y.shape()) + " is not the strided image of a " +
                         std::to_string(out_h) + "x" + std::to_string(out_w) + " map under kernel " +
                         shape_str(K.shape()));
  }
  if (K.dim(3) > out_w) {
    throw DimensionError("conv2d_transposed: kernel " + shape_str(K.shape()) + " wider than output");
  }
  Tensor<T> out = kernels::conv_adjoint(Y, K, stride, out_h, out_w);
  return input.graph().record(
      "conv2d_transposed", std::move(out), {input.id(), kernel.id()}, [=](Graph<T>& g, std::size_t self) {
        const auto& G = g.grad(self);
        if (g.requires_grad(input.id())) {
          accumulate(g.grad(input.id()), kernels::conv_forward(G, g.value(kernel.id()), stride));
        }
        if (g.requires_grad(kernel.id())) {
          accumulate(g.grad(kernel.id()),
                     kernels::conv_kernel_grad(G, g.value(input.id()), g.value(kernel.id()).shape(), stride));
        }
      });
}

template <typename T>
Var<T> upsample_bilinear(Var<T> input, std::size_t factor) {
  if (factor < 1) throw ArgumentError("upsample_bilinear: factor must be >= 1");
  const auto& X = input.value();
  require_rank(X, 3, "upsample_bilinear");
  const std::size_t C = X.dim(0), H = X.dim(1), W = X.dim(2);
  const std::size_t Ho = H * factor, Wo = W * factor;
  const auto rows = bilinear_taps(H, factor);
  const auto cols = bilinear_taps(W, factor);
  Tensor<T> out({C, Ho, Wo});
  for (std::size_t c = 0; c < C; ++c) {
    const T* xc = X.ptr() + c * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      const auto& r = rows[i];
      for (std::size_t j = 0; j < Wo; ++j) {
        const auto& q = cols[j];
        const double top = (1.0 - q.frac) * xc[r.i0 * W + q.i0] + q.frac * xc[r.i0 * W + q.i1];
        const double bot = (1.0 - q.frac) * xc[r.i1 * W + q.i0] + q.frac * xc[r.i1 * W + q.i1];
        out[(c * Ho + i) * Wo + j] = static_cast<T>((1.0 - r.frac) * top + r.frac * bot);
      }
    }
  }
  return input.graph().record("upsample_bilinear", std::move(out), {input.id()},
                              [=](Graph<T>& g, std::size_t self) {
                                const auto& G = g.grad(self);
                                auto& gx = g.grad(input.id());
                                for (std::size_t c = 0; c < C; ++c) {
                                  T* gc = gx.ptr() + c * H * W;
                                  for (std::size_t i = 0; i < Ho; ++i) {
                                    const auto& r = rows[i];
                                    for (std::size_t j = 0; j < Wo; ++j) {
                                      const auto& q = cols[j];
                                      const double v = G[(c * Ho + i) * Wo + j];
                                      gc[r.i0 * W + q.i0] += static_cast<T>((1.0 - r.frac) * (1.0 - q.frac) * v);
                                      gc[r.i0 * W + q.i1] += static_cast<T>((1.0 - r.frac) * q.frac * v);
                                      gc[r.i1 * W + q.i0] += static_cast<T>(r.frac * (1.0 - q.frac) * v);
                                      gc[r.i1 * W + q.i1] += static_cast<T>(r.frac * q.frac * v);
                                    }
                                  }
                                }
                              });
}

template <typename T>
Var<T> global_avg_pool(Var<T> input) {
  const auto& X = input.value();
  require_rank(X, 3, "global_avg_pool");
  const std::size_t C = X.dim(0), HW = X.dim(1) * X.dim(2);
  Tensor<T> out({1, C});
  for (std::size_t c = 0; c < C; ++c) {
    T acc{0};
    for (std::size_t p = 0; p < HW; ++p) acc += X[c * HW + p];
    out[c] = acc / static_cast<T>(HW);
  }
  return input.graph().record("global_avg_pool", std::move(out), {input.id()}, [=](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& gx = g.grad(input.id());
    for (std::size_t c = 0; c < C; ++c) {
      const T v = G[c] / static_cast<T>(HW);
      for (std::size_t p = 0; p < HW; ++p) gx[c * HW + p] += v;
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate) {
  auto& graph = a.graph();
  if (!graph.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw ArgumentError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const T inv = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(a.value().size());
  for (auto& m : mask) m = keep(graph.rng()) ? inv : T{0};
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return graph.record("dropout", std::move(out), {a.id()}, [=, mask = std::move(mask)](Graph<T>& g, std::size_t self) {
    const auto& G = g.grad(self);
    auto& ga = g.grad(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * mask[i];
  });
}

template <typename T>
std::pair<Var<T>, Var<T>> lstm_cell(Var<T> x, Var<T> h, Var<T> c, const LstmWeights<T>& w) {
  const auto& H = h.value();
  require_rank(H, 2, "lstm_cell state");
  const std::size_t k = H.dim(1);
  if (c.shape() != H.shape()) {
    throw DimensionError("lstm_cell: cell state " + shape_str(c.shape()) + " vs hidden " + shape_str(H.shape()));
  }
  if (w.w_x.value().rank() != 2 || w.w_x.shape()[1] != 4 * k || w.w_h.shape() != Shape{k, 4 * k} ||
      w.bias.value().size() != 4 * k) {
    throw DimensionError("lstm_cell: weights " + shape_str(w.w_x.shape()) + ", " + shape_str(w.w_h.shape()) +
                         ", " + shape_str(w.bias.shape()) + " incompatible with state width " + std::to_string(k));
  }
  if (x.value().rank() != 2 || x.shape()[0] != H.dim(0)) {
    throw DimensionError("lstm_cell: input " + shape_str(x.shape()) + " vs state " + shape_str(H.shape()));
  }
  auto z = add_row(add(matmul(x, w.w_x), matmul(h, w.w_h)), w.bias);
  auto in_gate = sigmoid(slice_cols(z, 0, k));
  auto forget_gate = sigmoid(slice_cols(z, k, 2 * k));
  auto out_gate = sigmoid(slice_cols(z, 2 * k, 3 * k));
  auto candidate = tanh(slice_cols(z, 3 * k, 4 * k));
  auto c_next = add(mul(forget_gate, c), mul(in_gate, candidate));
  auto h_next = mul(out_gate, tanh(c_next));
  return {h_next, c_next};
}

template <typename T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (auto v : a.value().data()) acc += v;
  return a.graph().record("sum", Tensor<T>::scalar(acc), {a.id()}, [=](Graph<T>& g, std::size_t self) {
    const T G = g.grad(self)[0];
    for (auto& v : g.grad(a.id()).data()) v += G;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> weighted_mse(Var<T> pred, Var<T> truth, const std::vector<double>& weights) {
  require_same_shape(pred, truth, "weighted_mse");
  const std::size_t C = weights.size();
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw ConfigError("weighted_mse: loss weights must be finite and >= 0");
    wsum += w;
  }
  if (wsum <= 0.0) throw ConfigError("weighted_mse: all loss weights are zero");
  const auto& P = pred.value();
  if (P.rank() == 0 || P.shape()[0] != C || P.size() == 0) {
    throw DimensionError("weighted_mse: " + std::to_string(C) + " weights for prediction " + shape_str(P.shape()));
  }
  const std::size_t N = P.size() / C;
  const auto& Tv = truth.value();
  double loss = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (weights[c] == 0.0) continue;
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double e = static_cast<double>(P[c * N + i]) - static_cast<double>(Tv[c * N + i]);
      acc += e * e;
    }
    loss += weights[c] * acc / static_cast<double>(N);
  }
  loss /= wsum;
  return pred.graph().record(
      "weighted_mse", Tensor<T>::scalar(static_cast<T>(loss)), {pred.id(), truth.id()},
      [=](Graph<T>& g, std::size_t self) {
        const double G = g.grad(self)[0];
        const auto& Pv = g.value(pred.id());
        const auto& Tt = g.value(truth.id());
        for (int side = 0; side < 2; ++side) {
          const std::size_t id = side == 0 ? pred.id() : truth.id();
          if (!g.requires_grad(id)) continue;
          auto& gd = g.grad(id);
          const double sign = side == 0 ? 1.0 : -1.0;
          for (std::size_t c = 0; c < C; ++c) {
            const double coef = sign * 2.0 * weights[c] / (static_cast<double>(N) * wsum) * G;
            if (coef == 0.0) continue;
            for (std::size_t i = 0; i < N; ++i) {
              gd[c * N + i] += static_cast<T>(coef * (static_cast<double>(Pv[c * N + i]) - Tt[c * N + i]));
            }
          }
        }
      });
}

#define IONCAST_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                                                 \
  template Var<T> transpose(Var<T>);                                                                      \
  template Var<T> add(Var<T>, Var<T>);                                                                    \
  template Var<T> sub(Var<T>, Var<T>);                                                                    \
  template Var<T> mul(Var<T>, Var<T>);                                                                    \
  template Var<T> scale(Var<T>, T);                                                                       \
  template Var<T> add_row(Var<T>, Var<T>);                                                                \
  template Var<T> add_channel(Var<T>, Var<T>);                                                            \
  template Var<T> swish(Var<T>);                                                                          \
  template Var<T> sigmoid(Var<T>);                                                                        \
  template Var<T> tanh(Var<T>);                                                                           \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>);                                                     \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                        \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                           \
  template Var<T> crop(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);                       \
  template Var<T> reshape(Var<T>, Shape);                                                                 \
  template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                                     \
  template Var<T> scatter_sum(Var<T>, std::span<const std::int32_t>, std::size_t);                        \
  template Var<T> conv2d_circular(Var<T>, Var<T>, std::size_t);                                           \
  template Var<T> conv2d_transposed(Var<T>, Var<T>, std::size_t, std::size_t, std::size_t);               \
  template Var<T> upsample_bilinear(Var<T>, std::size_t);                                                 \
  template Var<T> global_avg_pool(Var<T>);                                                                \
  template Var<T> dropout(Var<T>, double);                                                                \
  template std::pair<Var<T>, Var<T>> lstm_cell(Var<T>, Var<T>, Var<T>, const LstmWeights<T>&);            \
  template Var<T> sum(Var<T>);                                                                            \
  template Var<T> mean(Var<T>);                                                                           \
  template Var<T> weighted_mse(Var<T>, Var<T>, const std::vector<double>&);                               \
  template Tensor<T> kernels::conv_forward(const Tensor<T>&, const Tensor<T>&, std::size_t);              \
  template Tensor<T> kernels::conv_adjoint(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,  \
                                           std::size_t);                                                  \
  template Tensor<T> kernels::conv_kernel_grad(const Tensor<T>&, const Tensor<T>&, const Shape&, std::size_t);

IONCAST_INSTANTIATE_OPS(float)
IONCAST_INSTANTIATE_OPS(double)

#undef IONCAST_INSTANTIATE_OPS

}  // namespace ioncast::ops
