// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "poslab/error.hpp"
#include "svg.hpp"

namespace poslab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + s + "' in " + std::string(what));
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad integer '" + s + "' in " + std::string(what));
  }
  return v;
}

void check_field(const std::string& field) {
  if (field.find_first_of(",\n\r") != std::string::npos) {
    throw ContractError("report field '" + field + "' contains a comma or newline");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("cannot write " + path.string());
}

double log_softmax_loss(std::span<const float> row, std::int32_t target) {
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : row) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
  return mx + std::log(sum) - static_cast<double>(row[static_cast<std::size_t>(target)]);
}

double last_token_loss(const TransformerLM<float>& model, std::span<const std::int32_t> prefix,
                       std::int32_t target) {
  const auto out = model.forward(prefix, 1, prefix.size());
  const std::size_t vocab = model.config().vocab_size;
  const auto logits = out.logits.data();
  return log_softmax_loss(logits.subspan((prefix.size() - 1) * vocab, vocab), target);
}

std::string default_size(const ModelConfig& m) {
  return std::to_string(m.n_layers) + "x" + std::to_string(m.d_model);
}

std::string metric_for(Objective objective) {
  return objective == Objective::mlm ? "masked_ppl" : "valid_ppl";
}

std::string row_key(const ReportRow& r) {
  return r.experiment + "|" + r.strategy + "|" + std::to_string(r.seed) + "|" + r.metric;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rows

void check_unique_rows(std::span<const ReportRow> rows) {
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(row_key(r)).second) {
      throw ContractError("duplicate report row (experiment '" + r.experiment + "', strategy '" +
                          r.strategy + "', seed " + std::to_string(r.seed) + ", metric '" +
                          r.metric + "')");
    }
  }
}

std::string format_rows_csv(std::span<const ReportRow> rows) {
  std::string out = std::string(kReportRowHeader) + '\n';
  for (const auto& r : rows) {
    for (const auto* f : {&r.experiment, &r.strategy, &r.objective, &r.size, &r.metric, &r.status}) {
      check_field(*f);
    }
    out += r.experiment + ',' + r.strategy + ',' + r.objective + ',' + r.size + ',' +
           std::to_string(r.seq_len) + ',' + r.metric + ',' + format_double(r.value) + ',' +
           std::to_string(r.seed) + ',' + r.status + '\n';
  }
  return out;
}

std::vector<ReportRow> parse_rows_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kReportRowHeader) throw FormatError("not a report row table");
  std::vector<ReportRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 9) throw FormatError("report row line " + std::to_string(i + 1) + " has " +
                                         std::to_string(f.size()) + " fields, expected 9");
    ReportRow r;
    r.experiment = f[0];
    r.strategy = f[1];
    r.objective = f[2];
    r.size = f[3];
    r.seq_len = parse_u64(f[4], "seq_len");
    r.metric = f[5];
    r.value = parse_double(f[6], "value");
    r.seed = parse_u64(f[7], "seed");
    r.status = f[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Shuffled prefix

std::vector<ShuffleDraw> plan_shuffle(std::size_t chunks, std::size_t length, std::size_t n,
                                      std::uint64_t seed, bool identity) {
  if (length <= kShuffleMinIndex) {
    throw ConfigError("shuffled-prefix evaluation needs length >= " +
                      std::to_string(kShuffleMinIndex + 1) + ", got " + std::to_string(length));
  }
  if (chunks == 0) throw ConfigError("shuffled-prefix evaluation needs at least one chunk");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_chunk(0, chunks - 1);
  std::uniform_int_distribution<std::size_t> pick_index(kShuffleMinIndex, length - 1);
  std::vector<ShuffleDraw> draws(n);
  for (auto& d : draws) {
    d.chunk = pick_chunk(rng);
    d.index = pick_index(rng);
    d.permutation.resize(d.index);
    std::iota(d.permutation.begin(), d.permutation.end(), std::size_t{0});
    if (identity) continue;
    do {
      std::shuffle(d.permutation.begin(), d.permutation.end(), rng);
    } while (std::is_sorted(d.permutation.begin(), d.permutation.end()));
  }
  return draws;
}

PairedTest wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("paired test needs equal sample counts, got " + std::to_string(x.size()) +
                         " and " + std::to_string(y.size()));
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (diff != 0.0) d.push_back(diff);
  }
  PairedTest t;
  t.n = d.size();
  if (d.empty()) return t;
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  double tie_term = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double ties = static_cast<double>(j - i + 1);
    tie_term += ties * ties * ties - ties;
    for (std::size_t k = i; k <= j; ++k) {
      if (d[order[k]] > 0) t.statistic += rank;
    }
    i = j + 1;
  }
  const double n = static_cast<double>(t.n);
  const double mean = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    t.p_value = t.statistic > mean ? 0.0 : 1.0;
    return t;
  }
  t.z = (t.statistic - mean - 0.5) / std::sqrt(var);
  t.p_value = 0.5 * std::erfc(t.z / std::sqrt(2.0));
  return t;
}

namespace {

void finish_outcome(ShuffleOutcome& o) {
  std::vector<double> intact, shuffled;
  for (const auto& s : o.samples) {
    intact.push_back(s.intact_loss);
    shuffled.push_back(s.shuffled_loss);
  }
  const double n = static_cast<double>(std::max<std::size_t>(o.samples.size(), 1));
  o.mean_intact = std::accumulate(intact.begin(), intact.end(), 0.0) / n;
  o.mean_shuffled = std::accumulate(shuffled.begin(), shuffled.end(), 0.0) / n;
  o.test = wilcoxon_signed_rank_greater(shuffled, intact);
}

}  // namespace

ShuffleOutcome shuffle_prefix_eval(const TransformerLM<float>& model,
                                   std::span<const std::int32_t> stream, std::size_t n_samples,
                                   std::uint64_t seed, bool identity_control) {
  if (!model.config().causal) {
    throw ContractError("shuffled-prefix evaluation is defined for causal models only");
  }
  const std::size_t length = model.config().max_seq_len;
  const auto offsets = chunk_offsets(stream.size(), length);
  const auto draws = plan_shuffle(offsets.size(), length, n_samples, seed, identity_control);
  ShuffleOutcome out;
  std::vector<std::int32_t> prefix, shuffled;
  for (const auto& d : draws) {
    const auto chunk = stream.subspan(offsets[d.chunk], length + 1);
    prefix.assign(chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(d.index));
    shuffled.resize(d.index);
    for (std::size_t i = 0; i < d.index; ++i) shuffled[i] = prefix[d.permutation[i]];
    const std::int32_t target = chunk[d.index];
    out.samples.push_back({d.chunk, d.index, last_token_loss(model, prefix, target),
                           last_token_loss(model, shuffled, target)});
  }
  finish_outcome(out);
  return out;
}

std::string format_shuffle_csv(const ShuffleOutcome& outcome) {
  std::string out = std::string(kShuffleCsvHeader) + '\n';
  for (const auto& s : outcome.samples) {
    out += std::to_string(s.chunk) + ',' + std::to_string(s.index) + ',' +
           format_double(s.intact_loss) + ',' + format_double(s.shuffled_loss) + '\n';
  }
  return out;
}

ShuffleOutcome parse_shuffle_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kShuffleCsvHeader) throw FormatError("not a shuffle table");
  ShuffleOutcome o;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 4) throw FormatError("shuffle line " + std::to_string(i + 1) + " malformed");
    o.samples.push_back({parse_u64(f[0], "chunk"), parse_u64(f[1], "index"),
                         parse_double(f[2], "intact_loss"), parse_double(f[3], "shuffled_loss")});
  }
  finish_outcome(o);
  return o;
}

std::vector<ReportRow> shuffle_rows(const ShuffleOutcome& outcome, const std::string& experiment,
                                    const RunConfig& run) {
  ReportRow base;
  base.experiment = experiment;
  base.strategy = std::string(positional_name(run.model.strategy));
  base.objective = std::string(objective_name(run.objective));
  base.size = default_size(run.model);
  base.seq_len = run.seq_len();
  base.seed = run.seed;
  std::vector<ReportRow> rows;
  for (const auto& [metric, value] : {std::pair<const char*, double>{"mean_intact_loss", outcome.mean_intact},
                                      {"mean_shuffled_loss", outcome.mean_shuffled},
                                      {"p_value", outcome.test.p_value}}) {
    ReportRow r = base;
    r.metric = metric;
    r.value = value;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Segments

SegmentCurve segment_curve(const TransformerLM<float>& model, std::span<const std::int32_t> stream,
                           const std::string& label, std::size_t n_segments) {
  if (!model.config().causal) {
    throw ContractError("per-segment perplexity is defined for causal models only");
  }
  const std::size_t length = model.config().max_seq_len;
  if (n_segments == 0 || length % n_segments != 0) {
    throw ConfigError(std::to_string(n_segments) + " segments do not divide length " +
                      std::to_string(length));
  }
  EvalOptions o;
  o.n_segments = n_segments;
  const EvalTotals totals = evaluate_stream(model, stream, length, o);
  return {label, totals.segment_perplexity(), totals.perplexity()};
}

std::string format_segments_csv(std::span<const SegmentCurve> curves) {
  std::string out = std::string(kSegmentCsvHeader) + '\n';
  for (const auto& c : curves) {
    check_field(c.label);
    for (std::size_t s = 0; s < c.perplexity.size(); ++s) {
      out += c.label + ',' + std::to_string(s) + ',' + format_double(c.perplexity[s]) + '\n';
    }
    out += c.label + ",all," + format_double(c.overall) + '\n';
  }
  return out;
}

std::vector<SegmentCurve> parse_segments_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kSegmentCsvHeader) throw FormatError("not a segment table");
  std::vector<SegmentCurve> curves;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 3) throw FormatError("segment line " + std::to_string(i + 1) + " malformed");
    if (curves.empty() || curves.back().label != f[0]) curves.push_back({f[0], {}, kNaN});
    const double v = parse_double(f[2], "perplexity");
    if (f[1] == "all") {
      curves.back().overall = v;
    } else if (parse_u64(f[1], "segment") == curves.back().perplexity.size()) {
      curves.back().perplexity.push_back(v);
    } else {
      throw FormatError("segment line " + std::to_string(i + 1) + " out of order");
    }
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Grids

std::size_t config_hash(const RunConfig& run, std::span<const std::string> excluded) {
  KeyValues kv = run.to_key_values();
  kv.erase("output_dir");
  for (const auto& k : excluded) kv.erase(k);
  return std::hash<std::string>{}(format_key_values(kv));
}

void check_grid(const Grid& grid) {
  if (grid.runs.empty()) throw ContractError("grid '" + grid.name + "' has no runs");
  const auto keys = RunConfig::keys();
  for (const auto& axis : grid.axes) {
    if (std::find(keys.begin(), keys.end(), axis) == keys.end()) {
      std::string msg = "grid axis '" + axis + "' is not a run config key";
      const std::string near = closest_match(axis, keys);
      if (!near.empty()) msg += "; did you mean '" + near + "'?";
      throw ContractError(msg);
    }
  }
  const std::size_t reference = config_hash(grid.runs[0].config, grid.axes);
  for (std::size_t i = 1; i < grid.runs.size(); ++i) {
    if (config_hash(grid.runs[i].config, grid.axes) == reference) continue;
    const KeyValues a = grid.runs[0].config.to_key_values(), b = grid.runs[i].config.to_key_values();
    std::string key;
    for (const auto& [k, v] : a) {
      if (k != "output_dir" && std::find(grid.axes.begin(), grid.axes.end(), k) == grid.axes.end() &&
          b.at(k) != v) {
        key = k;
        break;
      }
    }
    throw ContractError("grid '" + grid.name + "': run " + std::to_string(i) +
                        " differs from run 0 outside the declared axes (key '" + key + "')");
  }
}

std::string cell_label(const Grid& grid, std::size_t index) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%02zu", index);
  const RunConfig& c = grid.runs.at(index).config;
  return sanitize_name(grid.name + "-" + idx + "-" + std::string(positional_name(c.model.strategy)));
}

std::vector<RunConfig> expand_grid(const Grid& grid, const std::filesystem::path& output_root) {
  std::vector<RunConfig> out;
  for (std::size_t i = 0; i < grid.runs.size(); ++i) {
    RunConfig c = grid.runs[i].config;
    if (!grid.pin_seed) c.seed += i;
    if (!output_root.empty()) c.output_dir = (output_root / "checkpoints" / cell_label(grid, i)).string();
    out.push_back(std::move(c));
  }
  return out;
}

std::string cell_experiment_id(const Grid& grid, const RunConfig& run) {
  const KeyValues kv = run.to_key_values();
  std::string suffix;
  for (const auto& axis : grid.axes) {
    if (axis == "model.strategy") continue;
    if (!suffix.empty()) suffix += ';';
    suffix += axis + "=" + kv.at(axis);
  }
  return suffix.empty() ? grid.name : grid.name + "/" + suffix;
}

AblationResult run_ablation(const Grid& grid, const AblationOptions& options) {
  check_grid(grid);
  const auto configs = expand_grid(grid, options.output_root);
  std::vector<ReportRow> planned;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RunConfig& c = configs[i];
    ReportRow r;
    r.experiment = cell_experiment_id(grid, c);
    r.strategy = std::string(positional_name(c.model.strategy));
    r.objective = std::string(objective_name(c.objective));
    r.size = grid.runs[i].size.empty() ? default_size(c.model) : grid.runs[i].size;
    r.seq_len = c.seq_len();
    r.metric = metric_for(c.objective);
    r.value = kNaN;
    r.seed = c.seed;
    planned.push_back(std::move(r));
  }
  check_unique_rows(planned);

  std::vector<std::size_t> cells = options.only;
  if (cells.empty()) {
    cells.resize(configs.size());
    std::iota(cells.begin(), cells.end(), std::size_t{0});
  }
  std::map<std::string, Corpus> corpora;
  AblationResult result;
  for (std::size_t i : cells) {
    if (i >= configs.size()) {
      throw IndexError("grid cell " + std::to_string(i) + " out of range [0, " +
                       std::to_string(configs.size()) + ")");
    }
    const RunConfig& c = configs[i];
    ReportRow row = planned[i];
    AblationCell cell{c, std::nullopt, std::nullopt, {}};
    try {
      const Corpus* corpus = options.corpus;
      if (corpus == nullptr) {
        const std::string key = c.corpus + "|" + std::string(tokenizer_name(c.tokenizer)) + "|" +
                                std::to_string(c.word_vocab) + "|" + format_double(c.valid_fraction);
        auto it = corpora.find(key);
        if (it == corpora.end()) it = corpora.emplace(key, load_run_corpus(c)).first;
        corpus = &it->second;
      }
      ProgressFn progress;
      if (options.progress) progress = [&, i](const TrainRecord& r) { options.progress(i, r); };
      TrainResult trained = train(c, *corpus, progress);
      row.value = trained.report.final_valid().perplexity;
      cell.report = std::move(trained.report);
      if (options.keep_models) cell.model.emplace(std::move(trained.model));
    } catch (const DivergenceError& e) {
      row.status = "diverged";
      cell.error = e.what();
    } catch (const Error& e) {
      row.status = "error";
      cell.error = e.what();
    }
    result.rows.push_back(std::move(row));
    result.cells.push_back(std::move(cell));
  }
  return result;
}

AblationResult run_mlm_contrast(const RunConfig& base, std::span<const PositionalKind> strategies,
                                const AblationOptions& options) {
  if (base.objective != Objective::mlm) {
    throw ContractError("masked-LM contrast needs objective = mlm");
  }
  Grid grid;
  grid.name = "mlm";
  grid.axes = {"model.strategy"};
  for (PositionalKind kind : strategies) {
    RunConfig c = base;
    c.model.strategy = kind;
    grid.runs.push_back({c, {}});
  }
  return run_ablation(grid, options);
}

Grid parse_manifest(std::string_view text, std::string_view origin) {
  std::vector<std::string> blocks(1);
  std::size_t sections = 0;
  for (const auto line : lines_of(text)) {
    const std::string t = trim(line);
    if (!t.empty() && t.front() == '[') {
      if (t != "[run]") {
        throw UsageError(std::string(origin) + ": unknown section '" + t + "', expected [run]");
      }
      blocks.emplace_back();
      ++sections;
      continue;
    }
    blocks.back() += std::string(line) + '\n';
  }
  KeyValues globals = parse_key_values(blocks[0], origin);
  Grid grid;
  grid.name = "grid";
  grid.axes = {"model.strategy"};
  if (auto it = globals.find("experiment"); it != globals.end()) {
    grid.name = it->second;
    globals.erase(it);
  }
  if (auto it = globals.find("axes"); it != globals.end()) {
    grid.axes.clear();
    for (const auto& a : split(it->second, ',')) {
      if (!trim(a).empty()) grid.axes.push_back(trim(a));
    }
    globals.erase(it);
  }
  if (globals.contains("pin_seed")) {
    grid.pin_seed = kv_bool(globals, "pin_seed");
    globals.erase("pin_seed");
  }
  if (globals.contains("size")) throw UsageError(std::string(origin) + ": 'size' belongs in a [run] section");
  if (sections == 0) blocks.emplace_back();
  for (std::size_t s = 1; s < blocks.size(); ++s) {
    KeyValues kv = globals;
    std::string size;
    const std::string where = std::string(origin) + " [run] #" + std::to_string(s);
    for (auto& [k, v] : parse_key_values(blocks[s], where)) {
      if (k == "size") {
        size = v;
      } else {
        kv[k] = v;
      }
    }
    RunConfig c = RunConfig::from_key_values(kv);
    c.validate();
    grid.runs.push_back({std::move(c), size});
  }
  check_grid(grid);
  return grid;
}

Grid read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path), path.string());
}

std::string format_manifest(const Grid& grid) {
  std::string axes;
  for (const auto& a : grid.axes) axes += (axes.empty() ? "" : ",") + a;
  std::string out = "experiment = " + grid.name + "\naxes = " + axes +
                    "\npin_seed = " + (grid.pin_seed ? "true" : "false") + "\n";
  for (const auto& run : grid.runs) {
    out += "\n[run]\n";
    if (!run.size.empty()) out += "size = " + run.size + "\n";
    out += format_key_values(run.config.to_key_values());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

bool ReportInputs::empty() const {
  return rows.empty() && probes.empty() && shuffles.empty() && segments.empty();
}

std::string sanitize_name(std::string_view name) {
  std::string out(name);
  for (char& c : out) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out.empty() ? "_" : out;
}

std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs,
                                               const std::filesystem::path& outdir) {
  if (inputs.empty()) throw ContractError("nothing to report");
  check_unique_rows(inputs.rows);
  const auto csv = outdir / "csv", svgdir = outdir / "svg";
  const bool charts = !inputs.probes.empty() || !inputs.shuffles.empty() || !inputs.segments.empty();
  for (const auto& dir : {csv, svgdir}) {
    if (dir == svgdir && !charts) continue;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
      throw IoError("cannot create " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
  }
  std::vector<std::filesystem::path> written;
  std::set<std::string> names;
  auto emit = [&](const std::filesystem::path& path, const std::string& text) {
    if (!names.insert(path.string()).second) {
      throw ContractError("two report artifacts map to " + path.string());
    }
    write_text(path, text);
    written.push_back(path);
  };

  std::map<std::string, std::vector<ReportRow>> by_experiment;
  for (const auto& r : inputs.rows) by_experiment[r.experiment].push_back(r);
  for (const auto& [id, rows] : by_experiment) {
    emit(csv / (sanitize_name(id) + ".csv"), format_rows_csv(rows));
  }

  if (!inputs.probes.empty()) {
    std::vector<svg::Series> series;
    for (const auto& p : inputs.probes) {
      emit(csv / ("probe_" + sanitize_name(p.label) + ".csv"), format_probe_curve_csv(p.layers, p.length));
      svg::Series s{p.label, {}, {}};
      for (const auto& r : p.layers) {
        s.x.push_back(static_cast<double>(r.layer));
        s.y.push_back(r.mad);
      }
      series.push_back(std::move(s));
    }
    const std::size_t length = inputs.probes.front().length;
    emit(svgdir / "probe_mad.svg",
         svg::line_chart("Position probe MAD by layer", "layer", "mean absolute distance", series,
                         svg::Rule{"random (L=" + std::to_string(length) + ")",
                                   random_baseline_mad(length)}));
  }

  for (const auto& s : inputs.shuffles) {
    const std::string name = sanitize_name(s.label);
    emit(csv / ("shuffle_" + name + ".csv"), format_shuffle_csv(s.outcome));
    svg::Series points{s.label, {}, {}};
    for (const auto& x : s.outcome.samples) {
      points.x.push_back(x.intact_loss);
      points.y.push_back(x.shuffled_loss);
    }
    emit(svgdir / ("shuffle_" + name + ".svg"),
         svg::scatter_chart("Token loss, intact vs shuffled prefix (" + s.label + ")",
                            "intact prefix loss", "shuffled prefix loss", points, true));
  }

  if (!inputs.segments.empty()) {
    emit(csv / "segments.csv", format_segments_csv(inputs.segments));
    std::size_t n = 0;
    std::vector<svg::Series> series;
    for (const auto& c : inputs.segments) {
      n = std::max(n, c.perplexity.size());
      series.push_back({c.label, {}, c.perplexity});
    }
    std::vector<std::string> categories;
    for (std::size_t i = 0; i < n; ++i) categories.push_back(std::to_string(i));
    emit(svgdir / "segments.svg",
         svg::bar_chart("Perplexity by position segment", "segment", "perplexity", categories, series));
  }
  return written;
}

namespace {

std::size_t length_from_baseline(double baseline) {
  // (L^2 - 1) / (3L) = b  =>  L = (3b + sqrt(9b^2 + 4)) / 2
  const double l = (3 * baseline + std::sqrt(9 * baseline * baseline + 4)) / 2;
  const auto length = static_cast<std::size_t>(std::llround(l));
  if (length == 0 || std::abs(random_baseline_mad(length) - baseline) > 1e-9 * l) {
    throw FormatError("random baseline " + format_double(baseline) + " matches no length");
  }
  return length;
}

ProbeCurve parse_probe_curve(std::string_view text, const std::string& label) {
  const auto lines = lines_of(text);
  ProbeCurve curve{label, 0, {}};
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 4) throw FormatError("probe curve line " + std::to_string(i + 1) + " malformed");
    ProbeResult r;
    r.layer = parse_u64(f[0], "layer");
    r.mad = parse_double(f[1], "mad");
    r.accuracy = parse_double(f[2], "accuracy");
    curve.length = length_from_baseline(parse_double(f[3], "random_baseline"));
    curve.layers.push_back(std::move(r));
  }
  return curve;
}

std::string strip_prefix(const std::string& stem, const std::string& prefix) {
  return stem.rfind(prefix, 0) == 0 ? stem.substr(prefix.size()) : stem;
}

}  // namespace

ReportInputs collect_report_inputs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  ReportInputs in;
  for (const auto& f : files) {
    const std::string text = read_text(f);
    const std::string_view header = lines_of(text).empty() ? "" : lines_of(text)[0];
    const std::string stem = f.stem().string();
    if (header == kReportRowHeader) {
      for (auto& r : parse_rows_csv(text)) in.rows.push_back(std::move(r));
    } else if (header == kProbeCurveHeader) {
      in.probes.push_back(parse_probe_curve(text, strip_prefix(stem, "probe_")));
    } else if (header == kShuffleCsvHeader) {
      in.shuffles.push_back({strip_prefix(stem, "shuffle_"), parse_shuffle_csv(text)});
    } else if (header == kSegmentCsvHeader) {
      for (auto& c : parse_segments_csv(text)) in.segments.push_back(std::move(c));
    }
  }
  return in;
}

}  // namespace poslab
