// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop, learning-rate schedule and evaluation for the causal and
// masked objectives.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poslab/data.hpp"
#include "poslab/keyvalue.hpp"
#include "poslab/model.hpp"

namespace poslab {

enum class Objective { causal_lm, mlm };

Objective parse_objective(std::string_view name);
std::string_view objective_name(Objective objective);

/// Dropout a masked-LM config gets when it does not set model.dropout.
inline constexpr double kMlmDropout = 0.1;

/// Everything needed to reproduce one training run. The model's vocabulary
/// size, causal flag and seed are derived: vocab from the tokenizer (plus a
/// MASK id for MLM), causal from the objective, seed from `seed`.
struct RunConfig {
  ModelConfig model;
  Objective objective = Objective::causal_lm;
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 5000;
  std::size_t tokens_per_batch = 16384;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  std::size_t eval_interval = 500;
  std::size_t eval_chunks = 0;  // cap on validation chunks per evaluation, 0 = all
  double mlm_probability = kMlmProbability;
  std::uint64_t seed = 0;
  std::string corpus;
  TokenizerKind tokenizer = TokenizerKind::byte;
  std::size_t word_vocab = 0;
  double valid_fraction = kValidFraction;
  std::string output_dir;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  KeyValues to_key_values() const;
  /// Strict reader: unknown keys raise UsageError with the closest valid key.
  /// Keys absent from kv keep their defaults.
  static RunConfig from_key_values(const KeyValues& kv);
  static std::vector<std::string> keys();

  /// Model config with the derived fields filled in for a corpus vocabulary.
  ModelConfig resolved_model(std::size_t corpus_vocab) const;
  std::size_t seq_len() const { return model.max_seq_len; }

  bool operator==(const RunConfig&) const = default;
};

/// Linear warmup 0 -> peak over `warmup` steps, then cosine decay to
/// 0.1 * peak at `total`.
double lr_at(std::size_t step, double peak_lr, std::size_t warmup, std::size_t total);

inline constexpr double kFinalLrFraction = 0.1;

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::size_t step = 0;
};

/// One AdamW update from each parameter's gradient buffer. Weight decay is
/// decoupled and applied only to tensors whose `decay` flag is set. A
/// non-finite gradient throws NumericalError before any parameter changes.
template <typename T>
void adam_step(std::span<const Tensor<T>> params, std::span<const bool> decay,
               AdamState<T>& state, double lr, const AdamOptions& options);

/// Scales all gradients by threshold / norm when the global L2 norm exceeds
/// the threshold. Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::span<const Tensor<T>> params, double threshold);

/// Summed token losses of an evaluation pass, optionally split by position
/// segment.
struct EvalTotals {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  std::vector<double> segment_loss_sum;
  std::vector<std::size_t> segment_tokens;

  double mean_loss() const;
  double perplexity() const;
  std::vector<double> segment_perplexity() const;
};

/// Fixed masking of validation chunks so MLM evaluations are comparable.
inline constexpr std::uint64_t kEvalMaskSeed = 0x9e3779b97f4a7c15ULL;

struct EvalOptions {
  Objective objective = Objective::causal_lm;
  std::size_t n_segments = 1;
  std::size_t batch_chunks = 16;
  std::size_t max_chunks = 0;  // 0 = every chunk of the stream
  double mlm_probability = kMlmProbability;
  std::uint64_t mlm_seed = kEvalMaskSeed;
  std::size_t base_vocab = 0;  // MLM: ids below this are real tokens, base_vocab is MASK
  std::size_t threads = 0;     // 0 = worker_threads()
};

/// Losses over the non-overlapping (L+1)-token chunks of `stream`. Causal
/// scores every next-token prediction; MLM corrupts each chunk with a seed
/// derived from (mlm_seed, chunk index) and scores selected positions only.
/// Chunks may be sharded across threads; per-chunk sums are reduced in chunk
/// order so the result does not depend on threads or batch size.
template <typename T>
EvalTotals evaluate_stream(const TransformerLM<T>& model, std::span<const std::int32_t> stream,
                           std::size_t length, const EvalOptions& options);

/// exp of the token-mean causal loss. Throws ContractError on an empty stream.
template <typename T>
double evaluate_perplexity(const TransformerLM<T>& model, std::span<const std::int32_t> stream,
                           std::size_t length);

/// Perplexity of positions [s*L/n, (s+1)*L/n) for each segment s. Throws
/// ConfigError when n does not divide L.
template <typename T>
std::vector<double> per_segment_perplexity(const TransformerLM<T>& model,
                                           std::span<const std::int32_t> stream,
                                           std::size_t length, std::size_t n_segments = 8);

struct TrainRecord {
  std::size_t step = 0;
  std::string split;  // "train" or "valid"
  double loss = 0.0;
  double perplexity = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::string checkpoint_path;
  bool diverged = false;

  /// Last validation record; throws ContractError if there is none.
  const TrainRecord& final_valid() const;
  const TrainRecord& initial_valid() const;
};

inline constexpr char kReportCsvHeader[] = "step,split,loss,perplexity,lr,seconds";

/// CSV with kReportCsvHeader; losses at full round-trip precision.
std::string format_report_csv(const TrainReport& report, bool include_seconds = true);
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

struct TrainResult {
  TrainReport report;
  TransformerLM<float> model;
};

using ProgressFn = std::function<void(const TrainRecord&)>;

/// Trains from scratch on `corpus`. Every eval_interval steps (and at step 0
/// and the last step) the full validation stream is evaluated. When
/// run.output_dir is set the checkpoint (checkpoint.plab), report.csv and the
/// resolved config (run.cfg) are written there. A non-finite loss stops the
/// run: the partial report is written and DivergenceError is thrown.
TrainResult train(const RunConfig& run, const Corpus& corpus, const ProgressFn& progress = {});

/// Loads run.corpus with the configured tokenizer.
Corpus load_run_corpus(const RunConfig& run);

/// Derived stream seed, e.g. per chunk or per step of a run.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Worker-thread cap from POSLAB_THREADS, else the hardware concurrency.
std::size_t worker_threads();

/// Empty unless OpenBLAS fell back to pre-AVX kernels on a CPU that has
/// AVX2 or AVX-512 (common on virtual CPUs it does not recognize); then a
/// one-line note naming the OPENBLAS_CORETYPE value to export.
std::string blas_kernel_hint();

inline constexpr char kCheckpointFile[] = "checkpoint.plab";
inline constexpr char kReportFile[] = "report.csv";
inline constexpr char kResolvedConfigFile[] = "run.cfg";

}  // namespace poslab
