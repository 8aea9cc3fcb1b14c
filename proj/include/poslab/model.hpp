// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-layer-norm transformer shared by the causal LM and the bidirectional
// masked LM. The output projection is tied to the token embedding.
//
// Trainable parameter count for config (n_layers N, d_model d, d_ff f,
// vocab V, max_seq_len L):
//
//   per layer  4(d^2 + d)   attention projections Q, K, V, O with biases
//            + 2df + f + d  feed-forward W1, b1, W2, b2
//            + 4d           two layer-norm gain/bias pairs
//   total      N * per_layer + 2d (final layer norm) + Vd (tied embedding)
//            + Ld           only for learned positions
//
// e.g. N=2, d=32, f=128, V=256: per layer 4224 + 8352 + 128 = 12704, total
// 25408 + 64 + 8192 = 33664.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "poslab/keyvalue.hpp"
#include "poslab/positional.hpp"
#include "poslab/tensor.hpp"

namespace poslab {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 256;
  std::size_t max_seq_len = 128;
  PositionalKind strategy = PositionalKind::nopos;
  bool causal = true;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError for d_model % n_heads != 0, d_ff < d_model, zero
  /// extents, odd d_model with sinusoidal positions or dropout outside [0,1).
  void validate() const;

  /// Entries under "model." (model.n_layers, model.strategy, ...).
  KeyValues to_key_values() const;
  /// Reads the "model." keys present in kv; missing keys keep defaults.
  static ModelConfig from_key_values(const KeyValues& kv);
  static std::vector<std::string> keys();

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerWeights {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Multi-head scaled dot-product attention over an already normalized input
/// x [B x L x d]. `mask` (undefined, [L x L] or [H x L x L]) is added to the
/// scores, scaled by 1/sqrt(d/H), before the softmax.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const LayerWeights<T>& w, std::size_t heads,
                               const Tensor<T>& mask);

template <typename T>
class TransformerLM {
 public:
  /// Normal(0, 0.02^2) projections and embeddings, zero biases, unit
  /// layer-norm gains. Deterministic per config.seed.
  explicit TransformerLM(const ModelConfig& config);

  struct Output {
    Tensor<T> logits;                 // [B x L x V]
    std::vector<Tensor<T>> hidden;    // n_layers + 1 states [B x L x d] when collected
  };

  /// tokens holds B*L ids row-major. Pass a generator to enable dropout
  /// (training); nullptr evaluates deterministically.
  Output forward(std::span<const std::int32_t> tokens, std::size_t batch, std::size_t length,
                 bool collect_hidden = false, std::mt19937_64* dropout_rng = nullptr) const;

  const ModelConfig& config() const { return config_; }
  const PositionalStrategy<T>& positional() const { return positional_; }
  const LayerWeights<T>& layer(std::size_t i) const { return layers_.at(i); }
  const Tensor<T>& token_embedding() const { return tok_emb_; }

  /// Trainable tensors in a fixed order with stable names.
  std::vector<NamedTensor<T>> parameters() const;
  std::size_t count_params() const;

 private:
  ModelConfig config_;
  Tensor<T> tok_emb_;
  PositionalStrategy<T> positional_;
  std::vector<LayerWeights<T>> layers_;
  Tensor<T> lnf_gamma_, lnf_beta_;
};

/// Closed-form trainable parameter count (see the header comment).
std::size_t expected_param_count(const ModelConfig& config);

inline constexpr char kCheckpointMagic[4] = {'P', 'L', 'A', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian uint32:
///   "PLAB" | version | config byte length | config as key = value text |
///   tensor count | per tensor: name length, name, rank, extents...,
///   float32 payload (little-endian).
template <typename T>
void save_checkpoint(const TransformerLM<T>& model, const std::filesystem::path& path);

/// Throws FormatError on bad magic, unsupported version (naming both),
/// truncation, or tensors that do not match the stored config.
template <typename T>
TransformerLM<T> load_checkpoint(const std::filesystem::path& path);

extern template class TransformerLM<float>;
extern template class TransformerLM<double>;

}  // namespace poslab
