// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Strategy ablation grids, the shuffled-prefix study, the masked-LM contrast
// and report emission (CSV tables plus SVG charts).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poslab/probing.hpp"
#include "poslab/training.hpp"

namespace poslab {

/// One line of a report table. (experiment, strategy, seed, metric) is unique
/// within a report.
struct ReportRow {
  std::string experiment;
  std::string strategy;
  std::string objective;
  std::string size;
  std::size_t seq_len = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok", "diverged" or "error"

  bool operator==(const ReportRow&) const = default;
};

inline constexpr char kReportRowHeader[] =
    "experiment,strategy,objective,size,seq_len,metric,value,seed,status";

/// Throws ContractError naming the first duplicated key.
void check_unique_rows(std::span<const ReportRow> rows);

std::string format_rows_csv(std::span<const ReportRow> rows);
/// Inverse of format_rows_csv. Throws FormatError on a bad header or line.
std::vector<ReportRow> parse_rows_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Shuffled prefix

inline constexpr std::size_t kShuffleMinIndex = 5;

/// What to evaluate for one sample: predict chunk token `index` from the
/// tokens before it, once in order and once reordered by `permutation`
/// (shuffled[i] = prefix[permutation[i]]).
struct ShuffleDraw {
  std::size_t chunk = 0;
  std::size_t index = 0;
  std::vector<std::size_t> permutation;
};

/// n draws with chunk uniform in [0, chunks) and index uniform in
/// [5, length). Permutations are uniform over the non-identity orderings
/// unless `identity` is set. Throws ConfigError when length < 6 or there are
/// no chunks.
std::vector<ShuffleDraw> plan_shuffle(std::size_t chunks, std::size_t length, std::size_t n,
                                      std::uint64_t seed, bool identity = false);

struct ShuffleSample {
  std::size_t chunk = 0;
  std::size_t index = 0;
  double intact_loss = 0.0;
  double shuffled_loss = 0.0;
};

struct PairedTest {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double z = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;       // nonzero differences
};

struct ShuffleOutcome {
  std::vector<ShuffleSample> samples;
  double mean_intact = 0.0;
  double mean_shuffled = 0.0;
  PairedTest test;  // shuffled > intact
};

/// Token losses (natural log) with intact and shuffled prefixes over the
/// (L+1)-token chunks of `stream`, L = the model's max_seq_len. Throws
/// ContractError for a bidirectional model.
ShuffleOutcome shuffle_prefix_eval(const TransformerLM<float>& model,
                                   std::span<const std::int32_t> stream, std::size_t n_samples,
                                   std::uint64_t seed, bool identity_control = false);

/// One-sided Wilcoxon signed-rank test of x > y on paired samples. Zero
/// differences are dropped, tied magnitudes get average ranks and the normal
/// approximation uses the tie-corrected variance with a continuity
/// correction. p = 1 when every difference is zero.
PairedTest wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y);

inline constexpr char kShuffleCsvHeader[] = "chunk,index,intact_loss,shuffled_loss";
std::string format_shuffle_csv(const ShuffleOutcome& outcome);
/// Samples only; the aggregates and test are recomputed.
ShuffleOutcome parse_shuffle_csv(std::string_view text);

/// mean_intact_loss, mean_shuffled_loss and p_value rows.
std::vector<ReportRow> shuffle_rows(const ShuffleOutcome& outcome, const std::string& experiment,
                                    const RunConfig& run);

// ---------------------------------------------------------------------------
// Per-segment perplexity

struct SegmentCurve {
  std::string label;
  std::vector<double> perplexity;
  double overall = 0.0;
};

/// Causal perplexity of each of n equal position segments of every chunk.
SegmentCurve segment_curve(const TransformerLM<float>& model, std::span<const std::int32_t> stream,
                           const std::string& label, std::size_t n_segments = 8);

inline constexpr char kSegmentCsvHeader[] = "label,segment,perplexity";
std::string format_segments_csv(std::span<const SegmentCurve> curves);
std::vector<SegmentCurve> parse_segments_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Grids

struct GridRun {
  RunConfig config;
  std::string size;  // label; empty = "<n_layers>x<d_model>"
};

/// Runs that may differ only in the keys listed in `axes`. Unless
/// pin_seed, run i trains with seed config.seed + i.
struct Grid {
  std::string name;
  std::vector<GridRun> runs;
  std::vector<std::string> axes;
  bool pin_seed = true;
};

/// Hash of the run's config text without the given keys and output_dir.
std::size_t config_hash(const RunConfig& run, std::span<const std::string> excluded);

/// Throws ContractError when two runs differ outside the axes, when an axis
/// is not a config key, or when the grid is empty.
void check_grid(const Grid& grid);

/// Configs as they will be trained (seed and output_dir applied).
std::vector<RunConfig> expand_grid(const Grid& grid, const std::filesystem::path& output_root = {});

/// "name" or "name/axis=value;..." for axes other than the strategy.
std::string cell_experiment_id(const Grid& grid, const RunConfig& run);
/// Directory name of a cell under <output_root>/checkpoints.
std::string cell_label(const Grid& grid, std::size_t index);

struct AblationCell {
  RunConfig config;
  std::optional<TrainReport> report;
  std::optional<TransformerLM<float>> model;
  std::string error;
};

struct AblationResult {
  std::vector<ReportRow> rows;
  std::vector<AblationCell> cells;
};

struct AblationOptions {
  /// Checkpoints go to <output_root>/checkpoints/<cell label> when set.
  std::filesystem::path output_root;
  /// Used instead of loading each run's corpus (tests, shared data).
  const Corpus* corpus = nullptr;
  /// Only train these cell indices (all when empty).
  std::vector<std::size_t> only;
  bool keep_models = false;
  std::function<void(std::size_t cell, const TrainRecord&)> progress;
};

/// Trains every cell and reports one row per cell: final validation
/// perplexity (metric "valid_ppl", or "masked_ppl" for MLM). A diverged or
/// failed run becomes a row with a NaN value and its status; the remaining
/// cells still run.
AblationResult run_ablation(const Grid& grid, const AblationOptions& options = {});

/// Bidirectional masked-LM grid over the strategies. Throws ContractError
/// unless base.objective is mlm.
AblationResult run_mlm_contrast(const RunConfig& base, std::span<const PositionalKind> strategies,
                                const AblationOptions& options = {});

/// Grid from a manifest: top-level `key = value` defaults (run config keys
/// plus `experiment`, `axes` as a comma list and `pin_seed`) followed by
/// repeated `[run]` sections of overrides, where `size` sets the label.
Grid parse_manifest(std::string_view text, std::string_view origin = "<manifest>");
Grid read_manifest(const std::filesystem::path& path);

/// Fully resolved manifest (every key in every [run]); parses back to an
/// equal grid.
std::string format_manifest(const Grid& grid);

// ---------------------------------------------------------------------------
// Reports

struct ProbeCurve {
  std::string label;
  std::size_t length = 0;
  std::vector<ProbeResult> layers;
};

struct LabelledShuffle {
  std::string label;
  ShuffleOutcome outcome;
};

struct ReportInputs {
  std::vector<ReportRow> rows;
  std::vector<ProbeCurve> probes;
  std::vector<LabelledShuffle> shuffles;
  std::vector<SegmentCurve> segments;

  bool empty() const;
};

/// Writes outdir/csv/<experiment>.csv per experiment id, probe_<label>.csv,
/// shuffle_<label>.csv and segments.csv, plus outdir/svg/probe_mad.svg,
/// segments.svg and shuffle_<label>.svg. Output is a pure function of the
/// inputs. Returns the written paths in order. Throws ContractError on empty
/// inputs and IoError when outdir cannot be written.
std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs,
                                               const std::filesystem::path& outdir);

/// Reads every CSV written by emit_report (or by the CLI) under `dir`,
/// recursively, dispatching on the header line. Unknown CSVs are skipped.
ReportInputs collect_report_inputs(const std::filesystem::path& dir);

/// File-name safe form: characters outside [A-Za-z0-9._-] become '_'.
std::string sanitize_name(std::string_view name);

}  // namespace poslab
