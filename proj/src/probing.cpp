// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/probing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "poslab/data.hpp"
#include "poslab/error.hpp"
#include "poslab/keyvalue.hpp"
#include "poslab/ops.hpp"
#include "poslab/training.hpp"

namespace poslab {

namespace {

constexpr std::size_t kCollectBatch = 16;
constexpr std::size_t kScoreBatch = 4096;

std::vector<ProbeDataset> collect(const TransformerLM<float>& model,
                                  std::span<const std::int32_t> stream, std::size_t length,
                                  std::size_t max_chunks, const std::string& source,
                                  std::span<const std::size_t> layers) {
  auto offsets = chunk_offsets(stream.size(), length);
  if (max_chunks > 0 && offsets.size() > max_chunks) offsets.resize(max_chunks);
  if (offsets.empty()) throw ContractError("probe stream holds no complete chunk");
  const std::size_t d = model.config().d_model;
  std::vector<ProbeDataset> out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& ds = out[i];
    ds.dim = d;
    ds.length = length;
    ds.chunks = offsets.size();
    ds.layer = layers[i];
    ds.source = source;
    ds.features.reserve(offsets.size() * length * d);
    ds.labels.reserve(offsets.size() * length);
  }
  NoGradScope<float> no_grad;
  for (std::size_t begin = 0; begin < offsets.size(); begin += kCollectBatch) {
    const std::size_t end = std::min(offsets.size(), begin + kCollectBatch);
    std::span<const std::size_t> picked(offsets.data() + begin, end - begin);
    const TokenBatch batch = make_lm_batch(stream, picked, length);
    const auto fwd = model.forward(batch.inputs, picked.size(), length, true);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto h = fwd.hidden[layers[i]].data();
      out[i].features.insert(out[i].features.end(), h.begin(), h.end());
      for (std::size_t c = 0; c < picked.size(); ++c) {
        for (std::size_t p = 0; p < length; ++p) out[i].labels.push_back(static_cast<std::int32_t>(p));
      }
    }
  }
  return out;
}

}  // namespace

ProbeDataset collect_states(const TransformerLM<float>& model, std::span<const std::int32_t> stream,
                            std::size_t length, std::size_t layer, std::size_t max_chunks,
                            const std::string& source) {
  if (layer > model.config().n_layers) {
    throw ConfigError("layer " + std::to_string(layer) + " outside [0, " +
                      std::to_string(model.config().n_layers) + "]");
  }
  const std::size_t layers[] = {layer};
  return std::move(collect(model, stream, length, max_chunks, source, layers)[0]);
}

std::vector<ProbeDataset> collect_all_states(const TransformerLM<float>& model,
                                             std::span<const std::int32_t> stream,
                                             std::size_t length, std::size_t max_chunks,
                                             const std::string& source) {
  std::vector<std::size_t> layers(model.config().n_layers + 1);
  std::iota(layers.begin(), layers.end(), 0);
  return collect(model, stream, length, max_chunks, source, layers);
}

ProbeSplit split_chunks(std::size_t chunks, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("probe train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(chunks);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(chunks)));
  if (chunks > 1) n_train = std::clamp<std::size_t>(n_train, 1, chunks - 1);
  ProbeSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, chunks)));
  s.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, chunks)), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.eval.begin(), s.eval.end());
  return s;
}

Tensor<float> Probe::logits(std::span<const float> features, std::size_t n) const {
  const std::size_t d = mean.size();
  if (features.size() != n * d) throw DimensionError("probe input has the wrong feature count");
  std::vector<float> x(features.begin(), features.end());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) x[r * d + j] = (x[r * d + j] - mean[j]) * inv_std[j];
  }
  const Tensor<float> in({n, d}, std::move(x));
  return linear(activation(linear(in, w1, b1), Activation::relu), w2, b2);
}

std::vector<std::int32_t> Probe::predict(std::span<const float> features, std::size_t n) const {
  NoGradScope<float> no_grad;
  const Tensor<float> t = logits(features, n);
  const auto lg = t.data();
  std::vector<std::int32_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = lg.data() + r * length;
    out[r] = static_cast<std::int32_t>(std::max_element(row, row + length) - row);
  }
  return out;
}

Probe train_probe(const ProbeDataset& ds, const ProbeConfig& cfg) {
  if (ds.size() == 0) throw ContractError("probe dataset is empty");
  if (cfg.batch == 0) throw ConfigError("probe batch must be positive");
  retain_freed_memory();
  const std::size_t d = ds.dim, L = ds.length;
  const std::size_t h = cfg.hidden_width > 0 ? cfg.hidden_width : 2 * d;
  const ProbeSplit split = split_chunks(ds.chunks, cfg.train_fraction, cfg.seed);
  std::vector<std::size_t> rows;
  rows.reserve(split.train.size() * L);
  for (std::size_t c : split.train) {
    for (std::size_t p = 0; p < L; ++p) rows.push_back(c * L + p);
  }

  Probe probe;
  probe.length = L;
  probe.mean.assign(d, 0.0f);
  probe.inv_std.assign(d, 1.0f);
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  for (std::size_t r : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = ds.features[r * d + j];
      sum[j] += v;
      sq[j] += v * v;
    }
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < d; ++j) {
    const double mu = sum[j] / n;
    const double var = std::max(0.0, sq[j] / n - mu * mu);
    probe.mean[j] = static_cast<float>(mu);
    probe.inv_std[j] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-6));
  }

  std::mt19937_64 rng(cfg.seed);
  auto init = [&](std::size_t fan_in, std::size_t fan_out) {
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    std::vector<float> v(fan_in * fan_out);
    for (float& x : v) x = static_cast<float>(nd(rng));
    return Tensor<float>({fan_in, fan_out}, std::move(v), true);
  };
  probe.w1 = init(d, h);
  probe.b1 = Tensor<float>::zeros({h}, true);
  probe.w2 = init(h, L);
  probe.b2 = Tensor<float>::zeros({L}, true);
  const std::vector<Tensor<float>> params{probe.w1, probe.b1, probe.w2, probe.b2};
  const bool decay[] = {false, false, false, false};
  AdamState<float> adam;
  const AdamOptions opts{0.9, 0.98, 1e-8, 0.0};

  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  std::vector<float> xb(cfg.batch * d);
  std::vector<std::int32_t> yb(cfg.batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t r = rows[pick(rng)];
      std::copy_n(ds.features.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                  xb.begin() + static_cast<std::ptrdiff_t>(b * d));
      yb[b] = ds.labels[r];
    }
    for (const auto& p : params) p.zero_grad();
    Tape<float> tape;
    TapeScope<float> scope(tape);
    const Tensor<float> loss = cross_entropy(probe.logits(xb, cfg.batch), yb);
    tape.backward(loss);
    adam_step<float>(params, decay, adam, cfg.lr, opts);
  }
  for (const auto& p : params) p.set_requires_grad(false);
  return probe;
}

double mean_absolute_distance(std::span<const std::pair<std::int32_t, std::int32_t>> pairs) {
  if (pairs.empty()) throw EmptyLossError("no predictions to score");
  double total = 0.0;
  for (const auto& [t, p] : pairs) total += std::abs(static_cast<double>(t) - p);
  return total / static_cast<double>(pairs.size());
}

ProbeResult probe_mad(const Probe& probe, const ProbeDataset& ds, std::span<const std::size_t> chunks) {
  if (probe.length != ds.length) {
    throw DimensionError("probe predicts " + std::to_string(probe.length) +
                         " positions but the dataset has length " + std::to_string(ds.length));
  }
  std::vector<std::size_t> all;
  if (chunks.empty()) {
    all.resize(ds.chunks);
    std::iota(all.begin(), all.end(), 0);
    chunks = all;
  }
  ProbeResult res;
  res.layer = ds.layer;
  const std::size_t d = ds.dim, L = ds.length;
  const std::size_t per = std::max<std::size_t>(1, kScoreBatch / L);
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < chunks.size(); begin += per) {
    const std::size_t end = std::min(chunks.size(), begin + per);
    std::vector<float> x;
    x.reserve((end - begin) * L * d);
    for (std::size_t i = begin; i < end; ++i) {
      const auto first = ds.features.begin() + static_cast<std::ptrdiff_t>(chunks[i] * L * d);
      x.insert(x.end(), first, first + static_cast<std::ptrdiff_t>(L * d));
    }
    const auto pred = probe.predict(x, (end - begin) * L);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t p = 0; p < L; ++p) {
        const std::int32_t truth = ds.labels[chunks[i] * L + p];
        const std::int32_t guess = pred[(i - begin) * L + p];
        res.predictions.emplace_back(truth, guess);
        hits += truth == guess;
      }
    }
  }
  res.mad = mean_absolute_distance(res.predictions);
  res.accuracy = static_cast<double>(hits) / static_cast<double>(res.predictions.size());
  return res;
}

double random_baseline_mad(std::size_t length) {
  if (length == 0) throw ConfigError("sequence length must be positive");
  const double L = static_cast<double>(length);
  return (L * L - 1.0) / (3.0 * L);
}

std::vector<ProbeResult> probe_layers(const TransformerLM<float>& model,
                                      std::span<const std::int32_t> stream, std::size_t length,
                                      const ProbeConfig& config, std::span<const std::size_t> layers,
                                      std::size_t max_chunks) {
  for (std::size_t l : layers) {
    if (l > model.config().n_layers) {
      throw ConfigError("layer " + std::to_string(l) + " outside [0, " +
                        std::to_string(model.config().n_layers) + "]");
    }
  }
  const auto datasets = collect_all_states(model, stream, length, max_chunks);
  const ProbeSplit split = split_chunks(datasets.front().chunks, config.train_fraction, config.seed);
  std::vector<ProbeResult> out;
  for (const auto& ds : datasets) {
    if (!layers.empty() && std::find(layers.begin(), layers.end(), ds.layer) == layers.end()) continue;
    const Probe probe = train_probe(ds, config);
    out.push_back(probe_mad(probe, ds, split.eval));
  }
  return out;
}

std::vector<ProbeResult> probe_all_layers(const TransformerLM<float>& model,
                                          std::span<const std::int32_t> stream,
                                          std::size_t length, const ProbeConfig& config,
                                          std::size_t max_chunks) {
  return probe_layers(model, stream, length, config, {}, max_chunks);
}

std::string format_probe_curve_csv(std::span<const ProbeResult> results, std::size_t length) {
  std::string out = std::string(kProbeCurveHeader) + '\n';
  const std::string base = format_double(random_baseline_mad(length));
  for (const auto& r : results) {
    out += std::to_string(r.layer) + ',' + format_double(r.mad) + ',' + format_double(r.accuracy) +
           ',' + base + '\n';
  }
  return out;
}

std::string format_probe_scatter_csv(const ProbeResult& result) {
  std::string out = std::string(kProbeScatterHeader) + '\n';
  for (const auto& [t, p] : result.predictions) {
    out += std::to_string(t) + ',' + std::to_string(p) + '\n';
  }
  return out;
}

}  // namespace poslab
