// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/positional.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <random>

#include "poslab/ops.hpp"

namespace poslab {

PositionalKind parse_positional_kind(std::string_view name) {
  if (name == "nopos") return PositionalKind::nopos;
  if (name == "learned") return PositionalKind::learned;
  if (name == "sinusoidal") return PositionalKind::sinusoidal;
  if (name == "alibi") return PositionalKind::alibi;
  throw ConfigError("unknown positional strategy '" + std::string(name) +
                    "' (expected nopos, learned, sinusoidal or alibi)");
}

std::string_view positional_name(PositionalKind kind) {
  switch (kind) {
    case PositionalKind::nopos: return "nopos";
    case PositionalKind::learned: return "learned";
    case PositionalKind::sinusoidal: return "sinusoidal";
    case PositionalKind::alibi: return "alibi";
  }
  return "nopos";
}

template <typename T>
Tensor<T> sinusoidal_table(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("sinusoidal table needs an even model dimension, got " + std::to_string(dim));
  }
  if (length == 0) throw ConfigError("sinusoidal table needs length >= 1");
  std::vector<T> v(length * dim);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle =
          static_cast<double>(p) /
          std::pow(kSinusoidalBase, static_cast<double>(2 * i) / static_cast<double>(dim));
      v[p * dim + 2 * i] = static_cast<T>(std::sin(angle));
      v[p * dim + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>({length, dim}, std::move(v));
}

namespace {

std::vector<double> power_of_two_slopes(unsigned n) {
  std::vector<double> s(n);
  for (unsigned h = 0; h < n; ++h) {
    s[h] = std::exp2(-8.0 * static_cast<double>(h + 1) / static_cast<double>(n));
  }
  return s;
}

std::vector<double> interleaved_slopes(unsigned n) {
  if (std::has_single_bit(n)) return power_of_two_slopes(n);
  const unsigned p = std::bit_floor(n);
  std::vector<double> s = power_of_two_slopes(p);
  const std::vector<double> finer = interleaved_slopes(2 * p);
  for (unsigned i = 0; s.size() < n; i += 2) s.push_back(finer[i]);
  return s;
}

}  // namespace

std::vector<double> alibi_slopes(int heads) {
  if (heads <= 0) throw ConfigError("alibi_slopes: head count must be positive");
  std::vector<double> s = interleaved_slopes(static_cast<unsigned>(heads));
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

template <typename T>
Tensor<T> alibi_bias(std::size_t length, const std::vector<double>& slopes, bool causal) {
  if (length == 0 || slopes.empty()) throw ConfigError("alibi_bias: empty length or slopes");
  const std::size_t heads = slopes.size();
  std::vector<T> v(heads * length * length);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t j = 0; j < length; ++j) {
        T& out = v[(h * length + i) * length + j];
        if (j <= i) {
          out = static_cast<T>(-slopes[h] * static_cast<double>(i - j));
        } else {
          out = causal ? kMaskSentinel<T> : static_cast<T>(-slopes[h] * static_cast<double>(j - i));
        }
      }
    }
  }
  return Tensor<T>({heads, length, length}, std::move(v));
}

template <typename T>
Tensor<T> causal_mask(std::size_t length) {
  std::vector<T> v(length * length, T(0));
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = i + 1; j < length; ++j) v[i * length + j] = kMaskSentinel<T>;
  }
  return Tensor<T>({length, length}, std::move(v));
}

template <typename T>
Tensor<T> learned_table_init(std::size_t max_len, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kLearnedInitStd);
  std::vector<T> v(max_len * dim);
  for (T& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>({max_len, dim}, std::move(v), true);
}

template <typename T>
PositionalStrategy<T> PositionalStrategy<T>::make(PositionalKind kind, std::size_t max_len,
                                                  std::size_t dim, std::size_t heads,
                                                  std::uint64_t seed) {
  PositionalStrategy s;
  s.kind_ = kind;
  s.max_len_ = max_len;
  switch (kind) {
    case PositionalKind::nopos: break;
    case PositionalKind::learned: s.table_ = learned_table_init<T>(max_len, dim, seed); break;
    case PositionalKind::sinusoidal: s.table_ = sinusoidal_table<T>(max_len, dim); break;
    case PositionalKind::alibi: s.slopes_ = alibi_slopes(static_cast<int>(heads)); break;
  }
  return s;
}

template <typename T>
Tensor<T> PositionalStrategy<T>::apply_input_positions(const Tensor<T>& embeds) const {
  if (embeds.rank() != 3) {
    throw DimensionError("apply_input_positions expects [B x L x d], got " +
                         shape_str(embeds.shape()));
  }
  const std::size_t length = embeds.dim(1);
  if (kind_ == PositionalKind::nopos || kind_ == PositionalKind::alibi) return embeds;
  if (length > max_len_) {
    throw LengthError("sequence length " + std::to_string(length) + " exceeds the position table (" +
                      std::to_string(max_len_) + ")");
  }
  return add(embeds, rows(table_, 0, length));
}

template <typename T>
Tensor<T> PositionalStrategy<T>::attention_mask(std::size_t length, bool causal) const {
  if (kind_ == PositionalKind::alibi) return alibi_bias<T>(length, slopes_, causal);
  if (causal) return causal_mask<T>(length);
  return {};
}

template class PositionalStrategy<float>;
template class PositionalStrategy<double>;
template Tensor<float> sinusoidal_table<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_table<double>(std::size_t, std::size_t);
template Tensor<float> alibi_bias<float>(std::size_t, const std::vector<double>&, bool);
template Tensor<double> alibi_bias<double>(std::size_t, const std::vector<double>&, bool);
template Tensor<float> causal_mask<float>(std::size_t);
template Tensor<double> causal_mask<double>(std::size_t);
template Tensor<float> learned_table_init<float>(std::size_t, std::size_t, std::uint64_t);
template Tensor<double> learned_table_init<double>(std::size_t, std::size_t, std::uint64_t);

}  // namespace poslab
