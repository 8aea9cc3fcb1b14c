// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Absolute-position probes trained on frozen hidden states.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "poslab/model.hpp"

namespace poslab {

/// Hidden vectors of one layer, one row per token, grouped by chunk: row
/// c * length + p holds position p of chunk c.
struct ProbeDataset {
  std::vector<float> features;  // n x dim
  std::vector<std::int32_t> labels;
  std::size_t dim = 0;
  std::size_t length = 0;
  std::size_t chunks = 0;
  std::size_t layer = 0;
  std::string source;

  std::size_t size() const { return labels.size(); }
};

/// States of `layer` (0 = input embedding after positions, i = output of
/// block i) for the (L+1)-token chunks of `stream`, capped at max_chunks when
/// nonzero. The model is only read. Throws ConfigError for a layer outside
/// [0, n_layers].
ProbeDataset collect_states(const TransformerLM<float>& model, std::span<const std::int32_t> stream,
                            std::size_t length, std::size_t layer, std::size_t max_chunks = 0,
                            const std::string& source = {});

/// One forward pass per batch, every layer at once.
std::vector<ProbeDataset> collect_all_states(const TransformerLM<float>& model,
                                             std::span<const std::int32_t> stream,
                                             std::size_t length, std::size_t max_chunks = 0,
                                             const std::string& source = {});

inline constexpr double kProbeLearningRate = 2e-3;

struct ProbeConfig {
  std::size_t hidden_width = 0;  // 0 = 2 * feature dim
  std::size_t steps = 2000;
  std::size_t batch = 256;
  double lr = kProbeLearningRate;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

/// Chunk indices of the probe's train and held-out splits.
struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Deterministic split of chunk indices; both sides non-empty when chunks > 1.
ProbeSplit split_chunks(std::size_t chunks, double train_fraction, std::uint64_t seed);

/// 2-layer ReLU classifier over `length` position classes. Inputs are
/// standardized with per-feature statistics of the probe's training split.
struct Probe {
  std::vector<float> mean, inv_std;
  Tensor<float> w1, b1, w2, b2;
  std::size_t length = 0;

  /// Logits [n x length] for n feature rows.
  Tensor<float> logits(std::span<const float> features, std::size_t n) const;
  std::vector<std::int32_t> predict(std::span<const float> features, std::size_t n) const;
};

/// Adam on cross-entropy over position classes, minibatches drawn from the
/// training chunks of split_chunks(dataset.chunks, ...).
Probe train_probe(const ProbeDataset& dataset, const ProbeConfig& config);

struct ProbeResult {
  std::size_t layer = 0;
  double mad = 0.0;
  double accuracy = 0.0;
  std::vector<std::pair<std::int32_t, std::int32_t>> predictions;  // (true, predicted)
};

/// Argmax predictions on the given chunks (all chunks when empty). Throws
/// DimensionError when the probe's class count differs from dataset.length.
ProbeResult probe_mad(const Probe& probe, const ProbeDataset& dataset,
                      std::span<const std::size_t> chunks = {});

/// Mean absolute distance from (true, predicted) pairs.
double mean_absolute_distance(std::span<const std::pair<std::int32_t, std::int32_t>> pairs);

/// Expected MAD of a uniform predictor against uniform labels: (L^2 - 1) / (3L).
double random_baseline_mad(std::size_t length);

/// collect, train and score a probe for each listed layer (every layer when
/// `layers` is empty), each scored on its held-out chunks.
std::vector<ProbeResult> probe_layers(const TransformerLM<float>& model,
                                      std::span<const std::int32_t> stream, std::size_t length,
                                      const ProbeConfig& config, std::span<const std::size_t> layers,
                                      std::size_t max_chunks = 0);

/// collect, train and score a probe for every layer 0..n_layers, each scored
/// on its held-out chunks.
std::vector<ProbeResult> probe_all_layers(const TransformerLM<float>& model,
                                          std::span<const std::int32_t> stream,
                                          std::size_t length, const ProbeConfig& config,
                                          std::size_t max_chunks = 0);

inline constexpr char kProbeCurveHeader[] = "layer,mad,accuracy,random_baseline";
inline constexpr char kProbeScatterHeader[] = "true_pos,predicted_pos";

std::string format_probe_curve_csv(std::span<const ProbeResult> results, std::size_t length);
std::string format_probe_scatter_csv(const ProbeResult& result);

}  // namespace poslab
