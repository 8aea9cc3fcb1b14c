// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gemm.hpp"

namespace poslab {
namespace {

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Marks `out` as differentiable and records `fn`. The closure is skipped at
// backward time when no gradient reached `out`.
template <typename T, typename Fn>
void record(const char* op, Tensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  auto out_node = out.node_ptr();
  active_tape<T>()->record(op, [out_node, fn = std::forward<Fn>(fn)]() mutable {
    if (out_node->grad.empty()) return;
    fn(std::span<const T>(out_node->grad));
  });
}

// Gradient sink for an input, or an empty span when it takes no gradient.
template <typename T>
std::span<T> sink(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.grad();
}

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

int as_int(std::size_t v) { return static_cast<int>(v); }

}  // namespace

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
  auto v = t.data();
  const T top = std::numeric_limits<T>::max();
  bool bad = false;
  for (T x : v) bad |= !(std::abs(x) <= top);
  if (!bad) return;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << "non-finite value in output of " << op << ": shape " << shape_str(t.shape())
         << ", flat index " << i << ", value " << v[i];
      throw NumericalError(os.str());
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const int m = as_int(a.dim(0)), k = as_int(a.dim(1)), n = as_int(b.dim(1));
  Tensor<T> out = Tensor<T>::zeros({a.dim(0), b.dim(1)});
  detail::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0),
               out.data().data(), n);
  check_finite("matmul", out);
  if (wants_grad<T>({&a, &b})) {
    record("matmul", out, [a, b, m, n, k](std::span<const T> dc) mutable {
      if (auto da = sink(a); !da.empty()) {
        detail::gemm(false, true, m, k, n, T(1), dc.data(), n, b.data().data(), n, T(1),
                     da.data(), k);
      }
      if (auto db = sink(b); !db.empty()) {
        detail::gemm(true, false, k, n, m, T(1), a.data().data(), k, dc.data(), n, T(1),
                     db.data(), n);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, bool transpose_w) {
  if (w.rank() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_str(w.shape()));
  const std::size_t in_dim = transpose_w ? w.dim(1) : w.dim(0);
  const std::size_t out_dim = transpose_w ? w.dim(0) : w.dim(1);
  if (x.shape().back() != in_dim) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const int k = as_int(in_dim), n = as_int(out_dim);
  const int m = as_int(x.numel() / in_dim);
  const int ldw = transpose_w ? k : n;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  T* y = out.data().data();
  if (bias.defined()) {
    for (int r = 0; r < m; ++r) std::copy(bias.data().begin(), bias.data().end(), y + r * n);
  }
  detail::gemm(false, transpose_w, m, n, k, T(1), x.data().data(), k, w.data().data(), ldw,
               bias.defined() ? T(1) : T(0), y, n);
  check_finite("linear", out);
  if (wants_grad<T>({&x, &w, &bias})) {
    record("linear", out, [x, w, bias, m, n, k, ldw, transpose_w](std::span<const T> dy) mutable {
      if (auto dx = sink(x); !dx.empty()) {
        // dX = dY . op(W)^T
        detail::gemm(false, !transpose_w, m, k, n, T(1), dy.data(), n, w.data().data(), ldw,
                     T(1), dx.data(), k);
      }
      if (auto dw = sink(w); !dw.empty()) {
        if (transpose_w) {
          detail::gemm(true, false, n, k, m, T(1), dy.data(), n, x.data().data(), k, T(1),
                       dw.data(), k);
        } else {
          detail::gemm(true, false, k, n, m, T(1), x.data().data(), k, dy.data(), n, T(1),
                       dw.data(), n);
        }
      }
      if (auto db = sink(bias); !db.empty()) {
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) db[c] += dy[r * n + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const std::size_t ra = a.rank(), rb = b.rank();
  if (ra < 2 || ra != rb ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw DimensionError("batched_matmul: incompatible batch shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(ra - 2), k = a.dim(ra - 1);
  const std::size_t kb = transpose_b ? b.dim(rb - 1) : b.dim(rb - 2);
  const std::size_t n = transpose_b ? b.dim(rb - 2) : b.dim(rb - 1);
  if (kb != k) {
    throw DimensionError("batched_matmul: inner dimensions differ for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = a.shape();
  out_shape[ra - 1] = n;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const int im = as_int(m), in = as_int(n), ik = as_int(k);
  const int ldb = transpose_b ? ik : in;
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, transpose_b, im, in, ik, T(1), a.data().data() + i * m * k, ik,
                 b.data().data() + i * k * n, ldb, T(0), out.data().data() + i * m * n, in);
  }
  check_finite("batched_matmul", out);
  if (wants_grad<T>({&a, &b})) {
    record("batched_matmul", out,
           [a, b, batch, im, in, ik, ldb, transpose_b](std::span<const T> dc) mutable {
             const std::size_t sa = std::size_t(im) * ik, sb = std::size_t(ik) * in,
                               sc = std::size_t(im) * in;
             auto da = sink(a);
             auto db = sink(b);
             for (std::size_t i = 0; i < batch; ++i) {
               const T* dci = dc.data() + i * sc;
               if (!da.empty()) {
                 // dA = dC . op(B)^T
                 detail::gemm(false, !transpose_b, im, ik, in, T(1), dci, in,
                              b.data().data() + i * sb, ldb, T(1), da.data() + i * sa, ik);
               }
               if (!db.empty()) {
                 if (transpose_b) {
                   // B is n x k: dB = dC^T . A
                   detail::gemm(true, false, in, ik, im, T(1), dci, in,
                                a.data().data() + i * sa, ik, T(1), db.data() + i * sb, ik);
                 } else {
                   detail::gemm(true, false, ik, in, im, T(1), a.data().data() + i * sa, ik,
                                dci, in, T(1), db.data() + i * sb, in);
                 }
               }
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError("add: " + shape_str(b.shape()) + " does not broadcast onto " +
                         shape_str(a.shape()));
  }
  const std::size_t nb = b.numel();
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto y = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i % nb];
  check_finite("add", out);
  if (wants_grad<T>({&a, &b})) {
    record("add", out, [a, b, nb](std::span<const T> dy) mutable {
      if (auto da = sink(a); !da.empty()) {
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (auto db = sink(b); !db.empty()) {
        for (std::size_t i = 0; i < dy.size(); ++i) db[i % nb] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  check_finite("mul", out);
  if (wants_grad<T>({&a, &b})) {
    record("mul", out, [a, b](std::span<const T> dy) mutable {
      if (auto da = sink(a); !da.empty()) {
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b.data()[i];
      }
      if (auto db = sink(b); !db.empty()) {
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * factor;
  check_finite("scale", out);
  if (wants_grad<T>({&x})) {
    record("scale", out, [x, factor](std::span<const T> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  check_finite("sum", out);
  if (wants_grad<T>({&x})) {
    record("sum", out, [x](std::span<const T> dy) mutable {
      for (T& g : x.grad()) g += dy[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>& mask) {
  if (mask.defined() && (mask.rank() < 1 || !is_suffix(x.shape(), mask.shape()))) {
    throw DimensionError("softmax_rows: mask " + shape_str(mask.shape()) +
                         " does not broadcast onto " + shape_str(x.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows_total = x.numel() / n;
  const std::size_t mask_rows = mask.defined() ? mask.numel() / n : 1;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto y = out.data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows_total; ++r) {
    const T* xr = xv.data() + r * n;
    const T* mr = mask.defined() ? mask.data().data() + (r % mask_rows) * n : nullptr;
    T* yr = y.data() + r * n;
    T hi = kMaskSentinel<T>;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = mr ? xr[j] + mr[j] : xr[j];
      hi = std::max(hi, yr[j]);
    }
    if (hi == kMaskSentinel<T>) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(r) + " of " +
                               shape_str(x.shape()) + " is fully masked");
    }
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = (mr && mr[j] == kMaskSentinel<T>) ? T(0) : std::exp(yr[j] - hi);
      total += yr[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  check_finite("softmax_rows", out);
  if (wants_grad<T>({&x})) {
    auto y_node = out.node_ptr();
    record("softmax_rows", out, [x, y_node, n, rows_total](std::span<const T> dy) mutable {
      auto dx = x.grad();
      const T* yv = y_node->value.data();
      for (std::size_t r = 0; r < rows_total; ++r) {
        const T* yr = yv + r * n;
        const T* dyr = dy.data() + r * n;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dyr[j] * yr[j];
        T* dxr = dx.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  }
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t nrows = x.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(nrows);
  auto xv = x.data();
  auto y = out.data();
  auto g = gamma.data();
  auto b = beta.data();
  for (std::size_t r = 0; r < nrows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mu) * rs;
      xhat[r * d + j] = h;
      y[r * d + j] = g[j] * h + b[j];
    }
  }
  check_finite("layer_norm", out);
  if (wants_grad<T>({&x, &gamma, &beta})) {
    record("layer_norm", out,
           [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), d,
            nrows](std::span<const T> dy) mutable {
             auto dx = sink(x);
             auto dg = sink(gamma);
             auto db = sink(beta);
             auto g = gamma.data();
             for (std::size_t r = 0; r < nrows; ++r) {
               const T* dyr = dy.data() + r * d;
               const T* hr = xhat.data() + r * d;
               if (!dg.empty() || !db.empty()) {
                 for (std::size_t j = 0; j < d; ++j) {
                   if (!dg.empty()) dg[j] += dyr[j] * hr[j];
                   if (!db.empty()) db[j] += dyr[j];
                 }
               }
               if (dx.empty()) continue;
               T mean_dh = 0, mean_dh_h = 0;
               for (std::size_t j = 0; j < d; ++j) {
                 const T dh = dyr[j] * g[j];
                 mean_dh += dh;
                 mean_dh_h += dh * hr[j];
               }
               mean_dh /= static_cast<T>(d);
               mean_dh_h /= static_cast<T>(d);
               T* dxr = dx.data() + r * d;
               for (std::size_t j = 0; j < d; ++j) {
                 dxr[j] += rstd[r] * (dyr[j] * g[j] - mean_dh - hr[j] * mean_dh_h);
               }
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto y = out.data();
  auto xv = x.data();
  const T c = static_cast<T>(kGeluTanhCoeff);
  const T a = static_cast<T>(kGeluCubicCoeff);
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  }
  std::vector<T> th;
  if (kind == Activation::gelu) {
    th.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const T v = xv[i];
      th[i] = std::tanh(c * (v + a * v * v * v));
      y[i] = T(0.5) * v * (T(1) + th[i]);
    }
  }
  check_finite(kind == Activation::relu ? "relu" : "gelu", out);
  if (wants_grad<T>({&x})) {
    record(kind == Activation::relu ? "relu" : "gelu", out,
           [x, kind, c, a, th = std::move(th)](std::span<const T> dy) mutable {
             auto dx = x.grad();
             auto xv = x.data();
             if (kind == Activation::relu) {
               for (std::size_t i = 0; i < dy.size(); ++i) {
                 if (xv[i] > T(0)) dx[i] += dy[i];
               }
               return;
             }
             for (std::size_t i = 0; i < dy.size(); ++i) {
               const T v = xv[i];
               const T t = th[i];
               const T dt = (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
               dx[i] += dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::int32_t> ids,
                           const Shape& ids_shape) {
  if (table.rank() != 2) throw DimensionError("embedding_gather: table must be rank 2");
  if (shape_numel(ids_shape) != ids.size()) {
    throw DimensionError("embedding_gather: ids shape " + shape_str(ids_shape) +
                         " does not match " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding_gather: id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto y = out.data();
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.data() + std::size_t(ids[i]) * d, d, y.data() + i * d);
  }
  if (wants_grad<T>({&table})) {
    std::vector<std::int32_t> kept(ids.begin(), ids.end());
    record("embedding_gather", out, [table, kept = std::move(kept), d](std::span<const T> dy) mutable {
      auto dt = table.grad();
      for (std::size_t i = 0; i < kept.size(); ++i) {
        T* row = dt.data() + std::size_t(kept[i]) * d;
        const T* src = dy.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
      }
    });
  }
  return out;
}

namespace {

template <typename T>
void check_targets(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                   std::optional<std::int32_t> ignore_index) {
  if (logits.rank() < 2 || logits.numel() / logits.shape().back() != targets.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const auto vocab = static_cast<std::int32_t>(logits.shape().back());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (ignore_index && targets[i] == *ignore_index) continue;
    if (targets[i] < 0 || targets[i] >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
}

// log(sum(exp(row))) with max subtraction, accumulated in double.
template <typename T>
double log_sum_exp(const T* row, std::size_t n) {
  double hi = row[0];
  for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, static_cast<double>(row[j]));
  double total = 0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(row[j]) - hi);
  return hi + std::log(total);
}

}  // namespace

template <typename T>
std::vector<double> row_nll(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                            std::optional<std::int32_t> ignore_index) {
  check_targets(logits, targets, ignore_index);
  const std::size_t n = logits.shape().back();
  std::vector<double> out(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (ignore_index && targets[r] == *ignore_index) {
      out[r] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const T* row = logits.data().data() + r * n;
    out[r] = log_sum_exp(row, n) - static_cast<double>(row[targets[r]]);
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::optional<std::int32_t> ignore_index) {
  check_targets(logits, targets, ignore_index);
  const std::size_t n = logits.shape().back();
  std::vector<double> lse(targets.size(), 0.0);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (ignore_index && targets[r] == *ignore_index) continue;
    const T* row = logits.data().data() + r * n;
    lse[r] = log_sum_exp(row, n);
    total += lse[r] - static_cast<double>(row[targets[r]]);
    ++count;
  }
  if (count == 0) throw EmptyLossError("cross_entropy: every target is ignored");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count)));
  check_finite("cross_entropy", out);
  if (wants_grad<T>({&logits})) {
    std::vector<std::int32_t> kept(targets.begin(), targets.end());
    record("cross_entropy", out,
           [logits, kept = std::move(kept), lse = std::move(lse), ignore_index, n,
            count](std::span<const T> dl) mutable {
             auto dz = logits.grad();
             const double w = static_cast<double>(dl[0]) / static_cast<double>(count);
             for (std::size_t r = 0; r < kept.size(); ++r) {
               if (ignore_index && kept[r] == *ignore_index) continue;
               const T* row = logits.data().data() + r * n;
               T* drow = dz.data() + r * n;
               for (std::size_t j = 0; j < n; ++j) {
                 drow[j] += static_cast<T>(w * std::exp(static_cast<double>(row[j]) - lse[r]));
               }
               drow[kept[r]] -= static_cast<T>(w);
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.dim(0)) {
    throw IndexError("rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + shape_str(x.shape()));
  }
  const std::size_t stride = x.numel() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  std::vector<T> v(x.data().begin() + begin * stride, x.data().begin() + end * stride);
  Tensor<T> out(out_shape, std::move(v));
  if (wants_grad<T>({&x})) {
    record("rows", out, [x, offset = begin * stride](std::span<const T> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[offset + i] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (wants_grad<T>({&x})) {
    record("reshape", out, [x](std::span<const T> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

namespace {

// Copies between [B, L, H, dh] and [B, H, L, dh] layouts; `to_heads` selects
// the direction, `accumulate` adds instead of overwriting.
template <typename T>
void permute_heads(const T* src, T* dst, std::size_t b, std::size_t l, std::size_t h,
                   std::size_t dh, bool to_heads, bool accumulate) {
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t li = 0; li < l; ++li) {
      for (std::size_t hi = 0; hi < h; ++hi) {
        const std::size_t blhd = ((bi * l + li) * h + hi) * dh;
        const std::size_t bhld = ((bi * h + hi) * l + li) * dh;
        const T* s = src + (to_heads ? blhd : bhld);
        T* d = dst + (to_heads ? bhld : blhd);
        for (std::size_t j = 0; j < dh; ++j) {
          if (accumulate) {
            d[j] += s[j];
          } else {
            d[j] = s[j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_str(x.shape()) + " into " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t b = x.dim(0), l = x.dim(1), dh = x.dim(2) / heads;
  Tensor<T> out = Tensor<T>::zeros({b, heads, l, dh});
  permute_heads(x.data().data(), out.data().data(), b, l, heads, dh, true, false);
  if (wants_grad<T>({&x})) {
    record("split_heads", out, [x, b, l, heads, dh](std::span<const T> dy) mutable {
      permute_heads(dy.data(), x.grad().data(), b, l, heads, dh, false, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("merge_heads: expected rank 4, got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), heads = x.dim(1), l = x.dim(2), dh = x.dim(3);
  Tensor<T> out = Tensor<T>::zeros({b, l, heads * dh});
  permute_heads(x.data().data(), out.data().data(), b, l, heads, dh, false, false);
  if (wants_grad<T>({&x})) {
    record("merge_heads", out, [x, b, l, heads, dh](std::span<const T> dy) mutable {
      permute_heads(dy.data(), x.grad().data(), b, l, heads, dh, true, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T factor = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> m(x.numel());
  for (T& v : m) v = keep(rng) ? factor : T(0);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * m[i];
  if (wants_grad<T>({&x})) {
    record("dropout", out, [x, m = std::move(m)](std::span<const T> dy) mutable {
      auto dx = x.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * m[i];
    });
  }
  return out;
}

#define POSLAB_INSTANTIATE_OPS(T)                                                              \
  template void check_finite<T>(const char*, const Tensor<T>&);                                \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);    \
  template Tensor<T> batched_matmul<T>(const Tensor<T>&, const Tensor<T>&, bool);              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                              \
  template Tensor<T> embedding_gather<T>(const Tensor<T>&, std::span<const std::int32_t>,      \
                                         const Shape&);                                        \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const std::int32_t>,         \
                                      std::optional<std::int32_t>);                            \
  template std::vector<double> row_nll<T>(const Tensor<T>&, std::span<const std::int32_t>,     \
                                          std::optional<std::int32_t>);                        \
  template Tensor<T> rows<T>(const Tensor<T>&, std::size_t, std::size_t);                      \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> split_heads<T>(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> merge_heads<T>(const Tensor<T>&);                                         \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, std::mt19937_64&);

POSLAB_INSTANTIATE_OPS(float)
POSLAB_INSTANTIATE_OPS(double)

#undef POSLAB_INSTANTIATE_OPS

}  // namespace poslab
