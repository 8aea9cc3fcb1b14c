// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "poslab/error.hpp"
#include "poslab/experiments.hpp"
#include "test_util.hpp"

namespace poslab {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// ---------------------------------------------------------------- wilcoxon

TEST(Wilcoxon, MatchesReferenceNormalApproximation) {
  // reference values: scipy.stats.wilcoxon(alternative="greater",
  // method="approx", correction=True)
  const std::vector<double> x{1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30};
  const std::vector<double> y{0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29};
  const PairedTest t = wilcoxon_signed_rank_greater(x, y);
  EXPECT_EQ(t.n, 9u);
  EXPECT_EQ(t.statistic, 40.0);
  EXPECT_NEAR(t.z, 2.0139861843809137, 1e-12);
  EXPECT_NEAR(t.p_value, 0.022005492006475714, 1e-14);
}

TEST(Wilcoxon, TiesAndZeros) {
  const std::vector<double> d{1, 1, -1, 2, 2, 0, 3, -2, 4, 4, 0, 5};
  const std::vector<double> zero(d.size(), 0.0);
  const PairedTest up = wilcoxon_signed_rank_greater(d, zero);
  EXPECT_EQ(up.n, 10u);
  EXPECT_EQ(up.statistic, 48.0);
  EXPECT_NEAR(up.p_value, 0.020152565250366725, 1e-14);
  const PairedTest down = wilcoxon_signed_rank_greater(zero, d);
  EXPECT_EQ(down.statistic, 7.0);
  EXPECT_NEAR(down.p_value, 0.9843461010457298, 1e-14);
}

TEST(Wilcoxon, DegenerateInputs) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_EQ(wilcoxon_signed_rank_greater(a, a).p_value, 1.0);
  EXPECT_EQ(wilcoxon_signed_rank_greater(a, a).n, 0u);
  EXPECT_THROW(wilcoxon_signed_rank_greater(a, std::vector<double>{1}), DimensionError);
}

TEST(Wilcoxon, RankSumIdentity) {
  // W+ + W- = n(n+1)/2 for distinct nonzero differences
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.2, 1.0);
  std::vector<double> x(50), y(50, 0.0);
  for (auto& v : x) v = g(rng);
  const double wp = wilcoxon_signed_rank_greater(x, y).statistic;
  const double wm = wilcoxon_signed_rank_greater(y, x).statistic;
  EXPECT_EQ(wp + wm, 50.0 * 51.0 / 2.0);
}

// ---------------------------------------------------------------- shuffle plan

TEST(ShufflePlan, IndicesInRangeAndPermutationsValid) {
  const auto draws = plan_shuffle(7, 32, 500, 1);
  for (const auto& d : draws) {
    EXPECT_GE(d.index, kShuffleMinIndex);
    EXPECT_LT(d.index, 32u);
    EXPECT_LT(d.chunk, 7u);
    ASSERT_EQ(d.permutation.size(), d.index);
    std::vector<std::size_t> sorted = d.permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
    EXPECT_FALSE(std::is_sorted(d.permutation.begin(), d.permutation.end()));
  }
  for (const auto& d : plan_shuffle(7, 32, 50, 1, true)) {
    EXPECT_TRUE(std::is_sorted(d.permutation.begin(), d.permutation.end()));
  }
}

TEST(ShufflePlan, IndexUniformChiSquare) {
  const std::size_t L = 128, n = 10000, bins = L - kShuffleMinIndex;
  const auto draws = plan_shuffle(10, L, n, 2024);
  std::vector<double> count(bins, 0.0), chunk(10, 0.0);
  for (const auto& d : draws) {
    count[d.index - kShuffleMinIndex] += 1;
    chunk[d.chunk] += 1;
  }
  auto chi2 = [](const std::vector<double>& c, double expect) {
    double s = 0;
    for (double v : c) s += (v - expect) * (v - expect) / expect;
    return s;
  };
  // 0.999 quantiles of chi-square with 122 and 9 degrees of freedom
  EXPECT_LT(chi2(count, static_cast<double>(n) / bins), 176.01);
  EXPECT_LT(chi2(chunk, static_cast<double>(n) / 10), 27.88);
}

TEST(ShufflePlan, Errors) {
  EXPECT_THROW(plan_shuffle(3, 5, 1, 0), ConfigError);
  EXPECT_THROW(plan_shuffle(0, 32, 1, 0), ConfigError);
  EXPECT_NO_THROW(plan_shuffle(3, 6, 1, 0));
}

// ---------------------------------------------------------------- shuffle eval

ModelConfig tiny_model(PositionalKind kind, bool causal = true) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_heads = 2;
  c.vocab_size = 256;
  c.max_seq_len = 16;
  c.strategy = kind;
  c.causal = causal;
  c.seed = 5;
  return c;
}

TEST(ShuffleEval, IdentityControlIsBitwiseEqual) {
  const TransformerLM<float> m(tiny_model(PositionalKind::nopos));
  std::mt19937_64 rng(1);
  const auto stream = testing::random_ids(17 * 12, 256, rng);
  const ShuffleOutcome o = shuffle_prefix_eval(m, stream, 40, 3, true);
  ASSERT_EQ(o.samples.size(), 40u);
  for (const auto& s : o.samples) EXPECT_EQ(s.intact_loss, s.shuffled_loss);
  EXPECT_EQ(o.test.n, 0u);
  EXPECT_EQ(o.test.p_value, 1.0);
}

TEST(ShuffleEval, RepeatedTokenPrefixIsUnchanged) {
  const TransformerLM<float> m(tiny_model(PositionalKind::sinusoidal));
  const std::vector<std::int32_t> stream(17 * 3, 97);
  const ShuffleOutcome o = shuffle_prefix_eval(m, stream, 20, 4);
  for (const auto& s : o.samples) EXPECT_EQ(s.intact_loss, s.shuffled_loss);
}

TEST(ShuffleEval, CausalNoPosIsOrderSensitiveAndDeterministic) {
  const TransformerLM<float> m(tiny_model(PositionalKind::nopos));
  std::mt19937_64 rng(2);
  const auto stream = testing::random_ids(17 * 12, 256, rng);
  const ShuffleOutcome a = shuffle_prefix_eval(m, stream, 30, 8);
  const ShuffleOutcome b = shuffle_prefix_eval(m, stream, 30, 8);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_GE(a.samples[i].index, kShuffleMinIndex);
    EXPECT_EQ(a.samples[i].intact_loss, b.samples[i].intact_loss);
    EXPECT_EQ(a.samples[i].shuffled_loss, b.samples[i].shuffled_loss);
    changed += a.samples[i].intact_loss != a.samples[i].shuffled_loss;
  }
  EXPECT_GT(changed, 20u);
  double sum = 0;
  for (const auto& s : a.samples) sum += s.intact_loss;
  EXPECT_NEAR(a.mean_intact, sum / 30.0, 1e-12);
}

TEST(ShuffleEval, RejectsBidirectionalModel) {
  const TransformerLM<float> m(tiny_model(PositionalKind::nopos, false));
  const std::vector<std::int32_t> stream(17 * 3, 1);
  EXPECT_THROW(shuffle_prefix_eval(m, stream, 5, 0), ContractError);
}

TEST(ShuffleCsv, RoundTrip) {
  ShuffleOutcome o;
  o.samples = {{0, 5, 1.25, 2.5}, {3, 9, 0.1, 0.30000000000000004}};
  const ShuffleOutcome r = parse_shuffle_csv(format_shuffle_csv(o));
  ASSERT_EQ(r.samples.size(), 2u);
  EXPECT_EQ(r.samples[1].shuffled_loss, 0.30000000000000004);
  EXPECT_EQ(r.samples[1].index, 9u);
  EXPECT_DOUBLE_EQ(r.mean_shuffled, (2.5 + 0.30000000000000004) / 2);
  EXPECT_THROW(parse_shuffle_csv("a,b\n"), FormatError);
}

// ---------------------------------------------------------------- segments

TEST(Segments, PartitionIdentity) {
  const TransformerLM<float> m(tiny_model(PositionalKind::learned));
  std::mt19937_64 rng(4);
  const auto stream = testing::random_ids(17 * 20, 256, rng);
  const SegmentCurve c = segment_curve(m, stream, "learned");
  ASSERT_EQ(c.perplexity.size(), 8u);
  double log_mean = 0;
  for (double p : c.perplexity) log_mean += std::log(p) / 8.0;
  EXPECT_NEAR(log_mean, std::log(c.overall), 1e-9 * std::log(c.overall));
  EXPECT_THROW(segment_curve(m, stream, "x", 7), ConfigError);
  const TransformerLM<float> bi(tiny_model(PositionalKind::learned, false));
  EXPECT_THROW(segment_curve(bi, stream, "x"), ContractError);
}

TEST(Segments, CsvRoundTrip) {
  const std::vector<SegmentCurve> curves{{"nopos", {3.5, 2.25}, 2.8}, {"learned", {3.0, 2.0}, 2.4}};
  const auto back = parse_segments_csv(format_segments_csv(curves));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].perplexity, curves[0].perplexity);
  EXPECT_EQ(back[1].overall, 2.4);
  EXPECT_EQ(back[1].label, "learned");
}

// ---------------------------------------------------------------- rows

ReportRow row(std::string strategy, std::string metric, double value, std::uint64_t seed = 0) {
  ReportRow r;
  r.experiment = "grid-a";
  r.strategy = std::move(strategy);
  r.objective = "causal_lm";
  r.size = "2x16";
  r.seq_len = 16;
  r.metric = std::move(metric);
  r.value = value;
  r.seed = seed;
  return r;
}

TEST(Rows, CsvRoundTripAndUniqueness) {
  std::vector<ReportRow> rows{row("nopos", "valid_ppl", 12.5), row("learned", "valid_ppl", 0.1 + 0.2),
                              row("alibi", "valid_ppl", std::nan(""))};
  rows[2].status = "diverged";
  const auto back = parse_rows_csv(format_rows_csv(rows));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0], rows[0]);
  EXPECT_EQ(back[1].value, 0.1 + 0.2);
  EXPECT_TRUE(std::isnan(back[2].value));
  EXPECT_EQ(back[2].status, "diverged");
  EXPECT_NO_THROW(check_unique_rows(rows));
  rows.push_back(row("nopos", "valid_ppl", 1.0));
  EXPECT_THROW(check_unique_rows(rows), ContractError);
  rows.back().seed = 1;
  EXPECT_NO_THROW(check_unique_rows(rows));
  rows.back().experiment = "a,b";
  EXPECT_THROW(format_rows_csv(rows), ContractError);
  EXPECT_THROW(parse_rows_csv("x\n"), FormatError);
}

// ---------------------------------------------------------------- grids

std::filesystem::path corpus_path() { return std::filesystem::path(POSLAB_DATA_DIR) / "corpus.txt"; }

Corpus small_corpus() {
  std::ifstream in(corpus_path(), std::ios::binary);
  std::string text(40000, '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  text.resize(static_cast<std::size_t>(in.gcount()));
  return Corpus::from_text(text, TokenizerKind::byte);
}

RunConfig tiny_run(PositionalKind kind) {
  RunConfig r;
  r.model = tiny_model(kind);
  r.tokens_per_batch = 128;
  r.total_steps = 12;
  r.warmup_steps = 2;
  r.eval_interval = 6;
  r.eval_chunks = 20;
  r.peak_lr = 3e-3;
  r.seed = 2;
  return r;
}

Grid strategy_grid() {
  Grid g;
  g.name = "grid-a";
  g.axes = {"model.strategy"};
  for (auto k : kAllPositionalKinds) g.runs.push_back({tiny_run(k), {}});
  return g;
}

TEST(Grid, HashIgnoresAxesAndOutputDir) {
  RunConfig a = tiny_run(PositionalKind::nopos), b = tiny_run(PositionalKind::alibi);
  b.output_dir = "/elsewhere";
  const std::vector<std::string> axes{"model.strategy"};
  EXPECT_EQ(config_hash(a, axes), config_hash(b, axes));
  EXPECT_NE(config_hash(a, {}), config_hash(b, {}));
}

TEST(Grid, CheckRejectsNonAxisDifferences) {
  Grid g = strategy_grid();
  EXPECT_NO_THROW(check_grid(g));
  g.runs[2].config.peak_lr = 1e-2;
  try {
    check_grid(g);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("train.peak_lr"), std::string::npos) << e.what();
  }
  g.axes.push_back("train.peak_lr");
  EXPECT_NO_THROW(check_grid(g));
  g.axes.push_back("train.peak_lrr");
  EXPECT_THROW(check_grid(g), ContractError);
  EXPECT_THROW(check_grid(Grid{}), ContractError);
}

TEST(Grid, ExpandSeedsLabelsAndIds) {
  Grid g = strategy_grid();
  g.pin_seed = false;
  const auto runs = expand_grid(g, "/tmp/out");
  for (std::size_t i = 0; i < runs.size(); ++i) EXPECT_EQ(runs[i].seed, 2 + i);
  EXPECT_EQ(runs[1].output_dir, "/tmp/out/checkpoints/grid-a-01-learned");
  EXPECT_EQ(cell_experiment_id(g, runs[0]), "grid-a");
  g.axes.push_back("model.d_model");
  EXPECT_EQ(cell_experiment_id(g, runs[0]), "grid-a/model.d_model=16");
  g.pin_seed = true;
  EXPECT_EQ(expand_grid(g)[3].seed, 2u);
}

TEST(Ablation, FourStrategyGridGivesFourFiniteReproducibleRows) {
  const Corpus corpus = small_corpus();
  AblationOptions o;
  o.corpus = &corpus;
  const AblationResult a = run_ablation(strategy_grid(), o);
  ASSERT_EQ(a.rows.size(), 4u);
  std::set<std::string> strategies;
  for (const auto& r : a.rows) {
    EXPECT_TRUE(std::isfinite(r.value)) << r.strategy;
    EXPECT_GT(r.value, 1.0);
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.metric, "valid_ppl");
    EXPECT_EQ(r.size, "2x16");
    strategies.insert(r.strategy);
  }
  EXPECT_EQ(strategies.size(), 4u);
  const AblationResult b = run_ablation(strategy_grid(), o);
  EXPECT_EQ(format_rows_csv(a.rows), format_rows_csv(b.rows));
}

TEST(Ablation, DivergedCellIsRecordedAndGridContinues) {
  const Corpus corpus = small_corpus();
  Grid g = strategy_grid();
  g.axes = {"model.strategy", "train.peak_lr", "train.grad_clip"};
  g.runs[1].config.peak_lr = 1e30;
  g.runs[1].config.grad_clip = 1e30;
  AblationOptions o;
  o.corpus = &corpus;
  o.only = {0, 1, 2};
  const AblationResult r = run_ablation(g, o);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[1].status, "diverged");
  EXPECT_TRUE(std::isnan(r.rows[1].value));
  EXPECT_FALSE(r.cells[1].error.empty());
  EXPECT_EQ(r.rows[2].status, "ok");
  EXPECT_TRUE(std::isfinite(r.rows[2].value));
}

TEST(Ablation, MissingCorpusIsAnErrorRow) {
  Grid g = strategy_grid();
  for (auto& run : g.runs) run.config.corpus = "/nonexistent/corpus.txt";
  AblationOptions o;
  o.only = {0};
  const AblationResult r = run_ablation(g, o);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].status, "error");
}

TEST(Ablation, DuplicateCellsRejectedBeforeTraining) {
  Grid g = strategy_grid();
  g.runs.push_back(g.runs[0]);
  EXPECT_THROW(run_ablation(g), ContractError);
}

TEST(MlmContrast, RequiresMlmObjective) {
  const std::vector<PositionalKind> kinds{PositionalKind::nopos};
  EXPECT_THROW(run_mlm_contrast(tiny_run(PositionalKind::nopos), kinds), ContractError);
}

TEST(MlmContrast, BidirectionalRowsWithMaskedMetric) {
  const Corpus corpus = small_corpus();
  RunConfig base = tiny_run(PositionalKind::nopos);
  base.objective = Objective::mlm;
  const std::vector<PositionalKind> kinds{PositionalKind::nopos, PositionalKind::learned};
  AblationOptions o;
  o.corpus = &corpus;
  o.keep_models = true;
  const AblationResult r = run_mlm_contrast(base, kinds, o);
  ASSERT_EQ(r.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.rows[i].metric, "masked_ppl");
    EXPECT_EQ(r.rows[i].objective, "mlm");
    ASSERT_TRUE(r.cells[i].model.has_value());
    EXPECT_FALSE(r.cells[i].model->config().causal);
    EXPECT_EQ(r.cells[i].model->config().vocab_size, 257u);
  }
}

// ---------------------------------------------------------------- manifest

constexpr char kManifest[] = R"(# strategy sweep
experiment = sweep
axes = model.strategy, model.d_model
pin_seed = false
seed = 10
model.n_layers = 2
model.d_ff = 64
train.total_steps = 30
train.warmup_steps = 3

[run]
model.strategy = nopos
model.d_model = 16
size = S

[run]
model.strategy = alibi
model.d_model = 32
size = M
)";

TEST(Manifest, GlobalsAndRunSections) {
  const Grid g = parse_manifest(kManifest);
  EXPECT_EQ(g.name, "sweep");
  EXPECT_EQ(g.axes, (std::vector<std::string>{"model.strategy", "model.d_model"}));
  EXPECT_FALSE(g.pin_seed);
  ASSERT_EQ(g.runs.size(), 2u);
  EXPECT_EQ(g.runs[0].size, "S");
  EXPECT_EQ(g.runs[1].config.model.strategy, PositionalKind::alibi);
  EXPECT_EQ(g.runs[1].config.model.d_model, 32u);
  EXPECT_EQ(g.runs[1].config.total_steps, 30u);
  EXPECT_EQ(expand_grid(g)[1].seed, 11u);
  EXPECT_EQ(cell_experiment_id(g, g.runs[1].config), "sweep/model.d_model=32");
}

TEST(Manifest, FormatIsAFixpoint) {
  const Grid g = parse_manifest(kManifest);
  const std::string text = format_manifest(g);
  const Grid back = parse_manifest(text);
  EXPECT_EQ(back.name, g.name);
  EXPECT_EQ(back.axes, g.axes);
  EXPECT_EQ(back.pin_seed, g.pin_seed);
  ASSERT_EQ(back.runs.size(), g.runs.size());
  for (std::size_t i = 0; i < g.runs.size(); ++i) {
    EXPECT_EQ(back.runs[i].config, g.runs[i].config);
    EXPECT_EQ(back.runs[i].size, g.runs[i].size);
  }
  EXPECT_EQ(format_manifest(back), text);
}

TEST(Manifest, Errors) {
  EXPECT_THROW(parse_manifest("train.peak_lrr = 1\n"), UsageError);
  EXPECT_THROW(parse_manifest("[grid]\n"), UsageError);
  EXPECT_THROW(parse_manifest("size = S\n"), UsageError);
  // runs differing outside the declared axes
  EXPECT_THROW(parse_manifest("[run]\ntrain.peak_lr = 1e-3\n[run]\ntrain.peak_lr = 2e-3\n"),
               ContractError);
  EXPECT_EQ(parse_manifest("seed = 3\n").runs.size(), 1u);
}

// ---------------------------------------------------------------- report

ReportInputs sample_inputs() {
  ReportInputs in;
  in.rows = {row("nopos", "valid_ppl", 9.5), row("learned", "valid_ppl", 9.0),
             row("alibi", "valid_ppl", 8.5)};
  ReportRow other = row("nopos", "masked_ppl", 40.0);
  other.experiment = "mlm";
  in.rows.push_back(other);
  ProbeCurve curve{"nopos", 16, {}};
  for (std::size_t l = 0; l < 3; ++l) {
    ProbeResult r;
    r.layer = l;
    r.mad = 5.0 - static_cast<double>(l);
    r.accuracy = 0.1 * static_cast<double>(l);
    curve.layers.push_back(r);
  }
  in.probes.push_back(curve);
  ShuffleOutcome o;
  o.samples = {{0, 5, 1.0, 2.0}, {1, 7, 1.5, 1.25}, {2, 11, 0.75, 3.0}};
  in.shuffles.push_back({"nopos <causal>", o});
  in.segments = {{"nopos", {4, 3, 3, 3}, 3.2}, {"learned", {3.5, 3, 2.9, 2.8}, 3.0}};
  return in;
}

TEST(Report, RowCountsWellFormedSvgAndDeterminism) {
  testing::TempDir dir("report");
  const ReportInputs in = sample_inputs();
  const auto files = emit_report(in, dir.path());
  std::size_t csv_rows = 0, svgs = 0;
  for (const auto& f : files) {
    const std::string text = slurp(f);
    if (f.extension() == ".svg") {
      ++svgs;
      std::istringstream s(text);
      boost::property_tree::ptree tree;
      EXPECT_NO_THROW(boost::property_tree::read_xml(s, tree)) << f;
      EXPECT_EQ(tree.count("svg"), 1u) << f;
    } else if (text.rfind(kReportRowHeader, 0) == 0) {
      csv_rows += parse_rows_csv(text).size();
    }
  }
  EXPECT_EQ(csv_rows, in.rows.size());
  EXPECT_EQ(svgs, 3u);
  EXPECT_TRUE(std::filesystem::exists(dir / "csv/grid-a.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "svg/shuffle_nopos__causal_.svg"));

  std::vector<std::string> first;
  for (const auto& f : files) first.push_back(slurp(f));
  const auto again = emit_report(in, dir.path());
  ASSERT_EQ(again, files);
  for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(slurp(again[i]), first[i]) << files[i];
}

TEST(Report, CollectRoundTrip) {
  testing::TempDir dir("collect");
  const ReportInputs in = sample_inputs();
  emit_report(in, dir.path());
  const ReportInputs back = collect_report_inputs(dir.path());
  ASSERT_EQ(back.rows.size(), in.rows.size());
  std::set<std::string> a, b;
  for (const auto& r : in.rows) a.insert(format_rows_csv(std::vector<ReportRow>{r}));
  for (const auto& r : back.rows) b.insert(format_rows_csv(std::vector<ReportRow>{r}));
  EXPECT_EQ(a, b);
  ASSERT_EQ(back.probes.size(), 1u);
  EXPECT_EQ(back.probes[0].length, 16u);
  EXPECT_EQ(back.probes[0].layers[2].mad, 3.0);
  ASSERT_EQ(back.shuffles.size(), 1u);
  EXPECT_EQ(back.shuffles[0].outcome.samples.size(), 3u);
  ASSERT_EQ(back.segments.size(), 2u);
  EXPECT_EQ(back.segments[1].perplexity, in.segments[1].perplexity);
}

TEST(Report, Errors) {
  testing::TempDir dir("report_err");
  EXPECT_THROW(emit_report(ReportInputs{}, dir.path()), ContractError);
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(emit_report(sample_inputs(), dir / "blocker" / "out"), IoError);
  ReportInputs dup = sample_inputs();
  dup.rows.push_back(dup.rows[0]);
  EXPECT_THROW(emit_report(dup, dir / "d"), ContractError);
  EXPECT_THROW(collect_report_inputs(dir / "missing"), IoError);
}

TEST(Report, SanitizeName) {
  EXPECT_EQ(sanitize_name("grid-b/model.d_model=64"), "grid-b_model.d_model_64");
  EXPECT_EQ(sanitize_name(""), "_");
}

}  // namespace
}  // namespace poslab
