// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Positional strategies. Learned and sinusoidal tables are added to the token
// embeddings before the first layer; ALiBi instead contributes an additive
// bias to every attention score; NoPos does nothing at all and owns no state.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "poslab/tensor.hpp"

namespace poslab {

enum class PositionalKind { nopos, learned, sinusoidal, alibi };

inline constexpr PositionalKind kAllPositionalKinds[] = {
    PositionalKind::nopos, PositionalKind::learned, PositionalKind::sinusoidal, PositionalKind::alibi};

/// "nopos" | "learned" | "sinusoidal" | "alibi"; anything else is a ConfigError.
PositionalKind parse_positional_kind(std::string_view name);
std::string_view positional_name(PositionalKind kind);

inline constexpr double kSinusoidalBase = 10000.0;
inline constexpr double kLearnedInitStd = 0.02;

/// table[p, 2i] = sin(p / base^(2i/d)), table[p, 2i+1] = cos(p / base^(2i/d)).
template <typename T>
Tensor<T> sinusoidal_table(std::size_t length, std::size_t dim);

/// Per-head ALiBi slopes, strictly decreasing.
///
/// For a power-of-two head count H the slopes form the geometric sequence
/// 2^(-8(h+1)/H), h = 0..H-1. Otherwise, with P the largest power of two
/// below H, the set is the P slopes of the power-of-two case plus the first
/// H - P even-indexed slopes (0, 2, 4, ...) of the 2P case, interleaving the
/// extra heads between existing ones. That set is returned sorted descending,
/// which only relabels heads.
std::vector<double> alibi_slopes(int heads);

/// bias[h, i, j] = -slope_h * (i - j) for j <= i. Above the diagonal the entry
/// is the mask sentinel when causal, else -slope_h * (j - i).
template <typename T>
Tensor<T> alibi_bias(std::size_t length, const std::vector<double>& slopes, bool causal);

/// [L x L] additive mask, 0 on and below the diagonal, sentinel above.
template <typename T>
Tensor<T> causal_mask(std::size_t length);

/// i.i.d. Normal(0, 0.02^2) table marked trainable.
template <typename T>
Tensor<T> learned_table_init(std::size_t max_len, std::size_t dim, std::uint64_t seed);

template <typename T>
class PositionalStrategy {
 public:
  PositionalStrategy() = default;

  /// Builds the state for `kind`; `seed` only matters for learned tables.
  static PositionalStrategy make(PositionalKind kind, std::size_t max_len, std::size_t dim,
                                 std::size_t heads, std::uint64_t seed);

  PositionalKind kind() const { return kind_; }
  std::size_t max_len() const { return max_len_; }

  /// The trainable table for learned positions; undefined otherwise.
  Tensor<T>& learned_table() { return table_; }
  const Tensor<T>& table() const { return table_; }
  const std::vector<double>& slopes() const { return slopes_; }

  /// embeds [B x L x d] plus table rows 0..L-1 for table strategies, the input
  /// handle unchanged for NoPos and ALiBi. Throws LengthError past max_len.
  Tensor<T> apply_input_positions(const Tensor<T>& embeds) const;

  /// Additive attention mask for sequences of length L: [H x L x L] for ALiBi,
  /// the [L x L] causal mask for other causal models, undefined otherwise.
  Tensor<T> attention_mask(std::size_t length, bool causal) const;

 private:
  PositionalKind kind_ = PositionalKind::nopos;
  std::size_t max_len_ = 0;
  Tensor<T> table_;
  std::vector<double> slopes_;
};

extern template class PositionalStrategy<float>;
extern template class PositionalStrategy<double>;

}  // namespace poslab
