// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Each op computes its output eagerly and, when a
// tape is active and some input requires a gradient, records the closure that
// accumulates input gradients during Tape::backward().
//
// Broadcasting is deliberately limited to two cases: an additive operand whose
// shape is a trailing suffix of the other's (bias rows, position tables,
// attention masks) and the bias of linear().

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "poslab/tensor.hpp"

namespace poslab {

enum class Activation { relu, gelu };

/// sqrt(2/pi), the coefficient of the tanh approximation of gelu.
inline constexpr double kGeluTanhCoeff = 0.7978845608;
inline constexpr double kGeluCubicCoeff = 0.044715;

template <typename T>
inline constexpr T kMaskSentinel = -std::numeric_limits<T>::infinity();

/// a[m x k] . b[k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., k] . w[k x n] + bias[n]; bias may be undefined. With transpose_w
/// the weight is stored as [n x k] (used for the tied output projection).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {},
                 bool transpose_w = false);

/// a[..., m, k] . b[..., k, n], or b[..., n, k] transposed when transpose_b.
/// Leading (batch) extents must be identical.
template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b);

/// a + b, where b has a's shape or a trailing suffix of it.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Row-wise softmax over the last axis of x + mask. The mask is a constant
/// whose shape is a trailing suffix of x's; entries equal to kMaskSentinel
/// yield exactly zero probability. Throws DegenerateRowError if a whole row
/// is masked.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>& mask = {});

/// Standardize over the last axis (biased variance) and apply gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

/// table[V x d] gathered at ids (shape ids_shape) -> ids_shape + [d].
template <typename T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::int32_t> ids,
                           const Shape& ids_shape);

/// Mean negative log-likelihood of targets under softmax(logits) over the
/// rows whose target differs from ignore_index. Logits are [N x V] or any
/// [..., V] whose leading extents multiply to N.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::optional<std::int32_t> ignore_index = std::nullopt);

/// Per-row negative log-likelihood computed in double, no tape. Ignored rows
/// are reported as NaN.
template <typename T>
std::vector<double> row_nll(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                            std::optional<std::int32_t> ignore_index = std::nullopt);

/// x[begin:end] along the first axis.
template <typename T>
Tensor<T> rows(const Tensor<T>& x, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// [B, L, H*dh] -> [B, H, L, dh]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);

/// [B, H, L, dh] -> [B, L, H*dh]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

/// Inverted dropout. Returns x itself when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng);

/// Throws NumericalError naming the op, shape and first offending element.
template <typename T>
void check_finite(const char* op, const Tensor<T>& t);

}  // namespace poslab
