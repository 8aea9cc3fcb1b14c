// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "poslab/error.hpp"
#include "poslab/experiments.hpp"
#include "poslab/keyvalue.hpp"
#include "poslab/probing.hpp"

namespace poslab::cli {

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         std::span<const std::string> overrides, bool require_corpus) {
  KeyValues kv;
  if (file) {
    if (!std::filesystem::is_regular_file(*file)) {
      throw UsageError("config file not found: " + file->string());
    }
    kv = read_key_value_file(*file);
  }
  for (const auto& o : overrides) {
    auto [k, v] = split_assignment(o);
    kv[k] = v;
  }
  RunConfig run = RunConfig::from_key_values(kv);
  if (require_corpus && run.corpus.empty()) throw UsageError("missing required key 'corpus'");
  run.validate();
  return run;
}

namespace {

const std::vector<std::string> kSubcommands = {"train", "eval", "probe", "shuffle",
                                               "ablate", "mlm", "report"};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string output;
  std::uint64_t seed = 0;
  int verbosity = 0;
  bool quiet = false;
};

void add_config_options(CLI::App* app, Common& c) {
  app->add_option("--config,-c", c.config, "key = value run config file");
  app->add_option("--set,-s", c.sets, "override a config key (dotted key=value), repeatable")
      ->allow_extra_args(false);
}

// Checked after parsing so that an unknown flag is reported before a
// missing one.
using RequiredList = std::vector<std::pair<CLI::App*, CLI::Option*>>;

void required(RequiredList& list, CLI::App* app, CLI::Option* o) {
  o->description(o->get_description() + " (required)");
  list.emplace_back(app, o);
}

void add_output_option(CLI::App* app, Common& c, RequiredList* list) {
  auto* o = app->add_option("--output,-o", c.output, "output directory");
  if (list != nullptr) required(*list, app, o);
}

void add_seed_option(CLI::App* app, Common& c, const std::string& what) {
  app->add_option("--seed", c.seed, what);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("cannot write " + path.string());
}

void print_config(std::ostream& out, const std::string& title, const KeyValues& kv) {
  out << "# " << title << "\n" << format_key_values(kv) << std::flush;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_record(std::ostream& out, const TrainRecord& r, bool timed) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step %6zu  %-5s  loss %.4f  ppl %9.3f  lr %.2e", r.step,
                r.split.c_str(), r.loss, r.perplexity, r.lr);
  out << buf;
  if (timed) out << "  " << fixed(r.seconds, 1) << "s";
  out << "\n" << std::flush;
}

/// A checkpoint path, or a run directory holding checkpoint.plab.
std::filesystem::path checkpoint_file(const std::string& arg) {
  std::filesystem::path p(arg);
  if (std::filesystem::is_directory(p)) p /= kCheckpointFile;
  if (!std::filesystem::is_regular_file(p)) throw UsageError("checkpoint not found: " + p.string());
  return p;
}

/// Config for a command that reads a checkpoint: --config if given, else the
/// run.cfg stored next to the checkpoint.
RunConfig checkpoint_run(const Common& c, const std::filesystem::path& checkpoint) {
  std::optional<std::filesystem::path> file;
  if (!c.config.empty()) {
    file = c.config;
  } else if (std::filesystem::exists(checkpoint.parent_path() / kResolvedConfigFile)) {
    file = checkpoint.parent_path() / kResolvedConfigFile;
  }
  return resolve_config(file, c.sets);
}

struct Loaded {
  RunConfig run;
  Corpus corpus;
  TransformerLM<float> model;
};

Loaded load_for_checkpoint(const Common& c, const std::string& checkpoint_arg, std::ostream& out) {
  const auto path = checkpoint_file(checkpoint_arg);
  RunConfig run = checkpoint_run(c, path);
  print_config(out, "resolved config", run.to_key_values());
  Corpus corpus = load_run_corpus(run);
  TransformerLM<float> model = load_checkpoint<float>(path);
  const ModelConfig expected = run.resolved_model(corpus.vocab_size);
  if (model.config().vocab_size != expected.vocab_size) {
    throw ConfigError("checkpoint vocabulary " + std::to_string(model.config().vocab_size) +
                      " does not match the configured corpus (" +
                      std::to_string(expected.vocab_size) + ")");
  }
  return {std::move(run), std::move(corpus), std::move(model)};
}

std::vector<std::size_t> parse_layers(const std::string& spec, std::size_t n_layers) {
  std::vector<std::size_t> layers;
  if (spec == "all") return layers;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t pos = 0;
    std::size_t v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size()) {
      throw UsageError("--layers expects 'all' or a comma list of layer indices, got '" + spec + "'");
    }
    if (v > n_layers) {
      throw UsageError("layer " + item + " outside [0, " + std::to_string(n_layers) + "]");
    }
    layers.push_back(v);
  }
  return layers;
}

// ---------------------------------------------------------------- commands

int cmd_train(const Common& c, bool seed_given, std::ostream& out) {
  std::vector<std::string> sets = c.sets;
  if (!c.output.empty()) sets.push_back("output_dir=" + c.output);
  if (seed_given) sets.push_back("seed=" + std::to_string(c.seed));
  const RunConfig run = resolve_config(c.config.empty() ? std::nullopt
                                                        : std::optional<std::filesystem::path>(c.config),
                                       sets);
  if (run.output_dir.empty()) throw UsageError("missing required key 'output_dir' (or --output)");
  print_config(out, "resolved config", run.to_key_values());
  const Corpus corpus = load_run_corpus(run);
  ProgressFn progress;
  if (!c.quiet) progress = [&](const TrainRecord& r) { print_record(out, r, c.verbosity > 0); };
  const TrainResult result = train(run, corpus, progress);
  out << "final valid perplexity " << fixed(result.report.final_valid().perplexity) << "\n"
      << "checkpoint " << result.report.checkpoint_path << "\n";
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, std::size_t segments,
             std::ostream& out) {
  const Loaded l = load_for_checkpoint(c, checkpoint, out);
  const std::size_t length = l.model.config().max_seq_len;
  std::vector<ReportRow> rows;
  std::vector<SegmentCurve> curves;
  ReportRow row;
  row.experiment = "eval";
  row.strategy = std::string(positional_name(l.model.config().strategy));
  row.objective = std::string(objective_name(l.run.objective));
  row.size = std::to_string(l.model.config().n_layers) + "x" + std::to_string(l.model.config().d_model);
  row.seq_len = length;
  row.seed = l.run.seed;
  if (l.model.config().causal) {
    const SegmentCurve curve = segment_curve(l.model, l.corpus.valid(), row.strategy, segments);
    row.metric = "valid_ppl";
    row.value = curve.overall;
    out << "valid perplexity " << fixed(curve.overall) << "\n";
    if (segments > 1) {
      out << "segment perplexity";
      for (double p : curve.perplexity) out << " " << fixed(p, 3);
      out << "\n";
      curves.push_back(curve);
    }
  } else {
    EvalOptions o;
    o.objective = Objective::mlm;
    o.mlm_probability = l.run.mlm_probability;
    o.base_vocab = l.corpus.vocab_size;
    const EvalTotals t = evaluate_stream(l.model, l.corpus.valid(), length, o);
    row.metric = "masked_ppl";
    row.value = t.perplexity();
    out << "masked perplexity " << fixed(row.value) << "\n";
  }
  rows.push_back(row);
  if (!c.output.empty()) {
    ReportInputs in;
    in.rows = rows;
    in.segments = curves;
    emit_report(in, c.output);
    write_file(std::filesystem::path(c.output) / kResolvedConfigFile, format_key_values(l.run.to_key_values()));
    out << "wrote " << c.output << "\n";
  }
  return kExitOk;
}

struct ProbeArgs {
  std::string checkpoint;
  std::string layers = "all";
  std::string label;
  ProbeConfig config;
  std::size_t max_chunks = 0;
};

int cmd_probe(const Common& c, ProbeArgs a, std::ostream& out) {
  const Loaded l = load_for_checkpoint(c, a.checkpoint, out);
  a.config.seed = c.seed;
  const auto layers = parse_layers(a.layers, l.model.config().n_layers);
  const std::string label = a.label.empty() ? std::string(positional_name(l.model.config().strategy)) : a.label;
  KeyValues settings{{"probe.checkpoint", std::filesystem::absolute(checkpoint_file(a.checkpoint)).string()},
                     {"probe.layers", a.layers},
                     {"probe.label", label},
                     {"probe.steps", std::to_string(a.config.steps)},
                     {"probe.batch", std::to_string(a.config.batch)},
                     {"probe.lr", format_double(a.config.lr)},
                     {"probe.max_chunks", std::to_string(a.max_chunks)},
                     {"probe.seed", std::to_string(a.config.seed)}};
  print_config(out, "probe settings", settings);
  const std::size_t length = l.model.config().max_seq_len;
  ProbeCurve curve{label, length,
                   probe_layers(l.model, l.corpus.valid(), length, a.config, layers, a.max_chunks)};
  const double base = random_baseline_mad(length);
  for (const auto& r : curve.layers) {
    out << "layer " << r.layer << "  mad " << fixed(r.mad, 3) << "  (" << fixed(r.mad / base, 3)
        << " x random)  accuracy " << fixed(r.accuracy, 3) << "\n";
  }
  ReportInputs in;
  in.probes.push_back(curve);
  const std::filesystem::path dir(c.output);
  emit_report(in, dir);
  for (const auto& r : curve.layers) {
    write_file(dir / "csv" / ("probe_" + sanitize_name(label) + "_layer" + std::to_string(r.layer) + "_scatter.csv"),
               format_probe_scatter_csv(r));
  }
  write_file(dir / kResolvedConfigFile, format_key_values(l.run.to_key_values()));
  write_file(dir / "probe.cfg", format_key_values(settings));
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_shuffle(const Common& c, const std::string& checkpoint, std::size_t samples, bool identity,
                std::string label, std::ostream& out) {
  const Loaded l = load_for_checkpoint(c, checkpoint, out);
  if (label.empty()) label = std::string(positional_name(l.model.config().strategy));
  const ShuffleOutcome o = shuffle_prefix_eval(l.model, l.corpus.valid(), samples, c.seed, identity);
  out << "samples " << o.samples.size() << "  mean intact loss " << fixed(o.mean_intact)
      << "  mean shuffled loss " << fixed(o.mean_shuffled) << "\n"
      << "wilcoxon W+ " << o.test.statistic << "  z " << fixed(o.test.z, 3) << "  one-sided p "
      << o.test.p_value << "\n";
  if (!c.output.empty()) {
    RunConfig run = l.run;
    run.seed = c.seed;
    ReportInputs in;
    in.shuffles.push_back({label, o});
    in.rows = shuffle_rows(o, "shuffle-" + label, run);
    emit_report(in, c.output);
    const std::filesystem::path dir(c.output);
    write_file(dir / kResolvedConfigFile, format_key_values(l.run.to_key_values()));
    write_file(dir / "shuffle.cfg",
               format_key_values({{"shuffle.checkpoint", std::filesystem::absolute(checkpoint_file(checkpoint)).string()},
                                  {"shuffle.samples", std::to_string(samples)},
                                  {"shuffle.identity", identity ? "true" : "false"},
                                  {"shuffle.label", label},
                                  {"shuffle.seed", std::to_string(c.seed)}}));
    out << "wrote " << c.output << "\n";
  }
  return kExitOk;
}

void report_cells(const AblationResult& result, std::ostream& out) {
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    out << r.experiment << "  " << r.strategy << "  " << r.objective << "  " << r.metric << " "
        << fixed(r.value, 3) << "  [" << r.status << "]";
    if (!result.cells[i].error.empty()) out << "  " << result.cells[i].error;
    out << "\n";
  }
}

int emit_grid(const Grid& grid, const AblationResult& result, const std::vector<std::size_t>& cells,
              const std::filesystem::path& outdir, std::ostream& out) {
  std::filesystem::create_directories(outdir);
  write_file(outdir / "manifest.cfg", format_manifest(grid));
  ReportInputs in;
  in.rows = result.rows;
  std::filesystem::path target = outdir;
  if (!cells.empty()) {
    std::string tag;
    for (std::size_t i : cells) tag += (tag.empty() ? "" : "_") + std::to_string(i);
    target = outdir / "cells" / ("cell_" + tag);
  }
  emit_report(in, target);
  report_cells(result, out);
  out << "wrote " << target.string() << "\n";
  bool failed = false;
  for (const auto& r : result.rows) failed |= r.status != "ok";
  return failed ? kExitFailure : kExitOk;
}

AblationOptions grid_options(const Common& c, const std::vector<std::size_t>& cells, std::ostream& out) {
  AblationOptions o;
  o.output_root = c.output;
  o.only = cells;
  if (!c.quiet) {
    const bool timed = c.verbosity > 0;
    o.progress = [&out, timed](std::size_t cell, const TrainRecord& r) {
      out << "[cell " << cell << "] ";
      print_record(out, r, timed);
    };
  }
  return o;
}

int cmd_ablate(const Common& c, const std::string& manifest, const std::vector<std::size_t>& cells,
               std::ostream& out) {
  Grid grid = read_manifest(manifest);
  if (!c.sets.empty()) {
    for (auto& run : grid.runs) {
      KeyValues kv = run.config.to_key_values();
      for (const auto& s : c.sets) {
        auto [k, v] = split_assignment(s);
        kv[k] = v;
      }
      run.config = RunConfig::from_key_values(kv);
      run.config.validate();
    }
    check_grid(grid);
  }
  for (std::size_t i : cells) {
    if (i >= grid.runs.size()) {
      throw UsageError("--cell " + std::to_string(i) + " outside [0, " + std::to_string(grid.runs.size()) + ")");
    }
  }
  out << "# resolved manifest\n" << format_manifest(grid) << std::flush;
  const AblationResult result = run_ablation(grid, grid_options(c, cells, out));
  return emit_grid(grid, result, cells, c.output, out);
}

int cmd_mlm(const Common& c, bool seed_given, const std::string& strategies, std::ostream& out) {
  std::vector<std::string> sets{"objective=mlm"};
  sets.insert(sets.end(), c.sets.begin(), c.sets.end());
  if (seed_given) sets.push_back("seed=" + std::to_string(c.seed));
  const RunConfig base = resolve_config(
      c.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(c.config), sets);
  if (base.objective != Objective::mlm) throw UsageError("mlm requires objective = mlm");
  std::vector<PositionalKind> kinds;
  std::stringstream ss(strategies);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      kinds.push_back(parse_positional_kind(trim(item)));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  Grid grid;
  grid.name = "mlm";
  grid.axes = {"model.strategy"};
  for (auto k : kinds) {
    RunConfig r = base;
    r.model.strategy = k;
    grid.runs.push_back({r, {}});
  }
  out << "# resolved manifest\n" << format_manifest(grid) << std::flush;
  const AblationResult result = run_mlm_contrast(base, kinds, grid_options(c, {}, out));
  double nopos = 0, learned = 0;
  for (const auto& r : result.rows) {
    if (r.strategy == "nopos") nopos = r.value;
    if (r.strategy == "learned") learned = r.value;
  }
  const int code = emit_grid(grid, result, {}, c.output, out);
  if (nopos > 0 && learned > 0) out << "nopos / learned masked perplexity ratio " << fixed(nopos / learned, 3) << "\n";
  return code;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& output, std::ostream& out) {
  ReportInputs all;
  for (const auto& dir : inputs) {
    ReportInputs in = collect_report_inputs(dir);
    all.rows.insert(all.rows.end(), in.rows.begin(), in.rows.end());
    all.probes.insert(all.probes.end(), in.probes.begin(), in.probes.end());
    all.shuffles.insert(all.shuffles.end(), in.shuffles.begin(), in.shuffles.end());
    all.segments.insert(all.segments.end(), in.segments.begin(), in.segments.end());
  }
  if (all.empty()) throw UsageError("no report tables found under the given inputs");
  for (const auto& f : emit_report(all, output)) out << "wrote " << f.string() << "\n";
  return kExitOk;
}

int unknown_subcommand(const std::string& name, std::ostream& err) {
  err << "error: unknown subcommand '" << name << "'";
  const std::string near = closest_match(name, kSubcommands);
  if (!near.empty()) err << "; did you mean '" << near << "'?";
  err << "\nvalid subcommands:";
  for (const auto& s : kSubcommands) err << " " << s;
  err << "\n";
  return kExitUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"poslab: positional encoding laboratory for small transformer language models"};
  app.name(args.empty() ? "poslab" : std::filesystem::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  RequiredList must;
  app.add_flag("-v,--verbose", c.verbosity, "more output");
  app.add_flag("-q,--quiet", c.quiet, "no progress lines");

  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  add_config_options(train_cmd, c);
  add_output_option(train_cmd, c, nullptr);
  add_seed_option(train_cmd, c, "run seed (overrides the config)");

  std::string checkpoint;
  std::size_t segments = 8;
  auto* eval_cmd = app.add_subcommand("eval", "validation perplexity of a checkpoint");
  required(must, eval_cmd, eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file or run directory"));
  add_config_options(eval_cmd, c);
  add_output_option(eval_cmd, c, nullptr);
  eval_cmd->add_option("--segments", segments, "position segments for causal models")->capture_default_str();

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "absolute-position probes on every layer");
  required(must, probe_cmd, probe_cmd->add_option("--checkpoint", probe.checkpoint, "checkpoint file or run directory"));
  probe_cmd->add_option("--layers", probe.layers, "'all' or comma list of layers")->capture_default_str();
  probe_cmd->add_option("--steps", probe.config.steps, "probe optimizer steps")->capture_default_str();
  probe_cmd->add_option("--batch", probe.config.batch, "probe minibatch")->capture_default_str();
  probe_cmd->add_option("--max-chunks", probe.max_chunks, "cap on validation chunks (0 = all)")->capture_default_str();
  probe_cmd->add_option("--label", probe.label, "curve label (default: strategy)");
  add_config_options(probe_cmd, c);
  add_output_option(probe_cmd, c, &must);
  add_seed_option(probe_cmd, c, "probe seed");

  std::size_t samples = 200;
  bool identity = false;
  std::string shuffle_label;
  auto* shuffle_cmd = app.add_subcommand("shuffle", "token loss with intact vs shuffled prefixes");
  required(must, shuffle_cmd, shuffle_cmd->add_option("--checkpoint", checkpoint, "checkpoint file or run directory"));
  shuffle_cmd->add_option("--samples", samples, "number of sampled tokens")->capture_default_str();
  shuffle_cmd->add_flag("--identity", identity, "control: keep every prefix in order");
  shuffle_cmd->add_option("--label", shuffle_label, "output label (default: strategy)");
  add_config_options(shuffle_cmd, c);
  add_output_option(shuffle_cmd, c, nullptr);
  add_seed_option(shuffle_cmd, c, "sampling seed");

  std::string manifest;
  std::vector<std::size_t> cells;
  auto* ablate_cmd = app.add_subcommand("ablate", "train every run of an experiment manifest");
  required(must, ablate_cmd, ablate_cmd->add_option("--manifest,-m", manifest, "experiment manifest"));
  ablate_cmd->add_option("--set,-s", c.sets, "override a key in every run, repeatable");
  ablate_cmd->add_option("--cell", cells, "only these run indices (repeatable)");
  add_output_option(ablate_cmd, c, &must);

  std::string strategies = "nopos,learned,sinusoidal,alibi";
  auto* mlm_cmd = app.add_subcommand("mlm", "bidirectional masked-LM grid over strategies");
  add_config_options(mlm_cmd, c);
  mlm_cmd->add_option("--strategies", strategies, "comma list")->capture_default_str();
  add_output_option(mlm_cmd, c, &must);
  add_seed_option(mlm_cmd, c, "run seed (overrides the config)");

  std::vector<std::string> inputs;
  auto* report_cmd = app.add_subcommand("report", "merge report tables and redraw charts");
  required(must, report_cmd, report_cmd->add_option("--input,-i", inputs, "directory with report CSVs (repeatable)"));
  add_output_option(report_cmd, c, &must);

  if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), args[1]) == kSubcommands.end()) {
    return unknown_subcommand(args[1], err);
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    for (auto [sub, o] : must) {
      if (sub->parsed() && o->count() == 0) throw CLI::RequiredError(o->get_name());
    }
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    const bool seed_given = [&] {
      for (auto* sub : app.get_subcommands()) {
        if (auto* o = sub->get_option_no_throw("--seed"); o != nullptr && o->count() > 0) return true;
      }
      return false;
    }();
    const bool trains = train_cmd->parsed() || probe_cmd->parsed() || ablate_cmd->parsed() ||
                        mlm_cmd->parsed();
    if (trains && !c.quiet) {
      if (const std::string hint = blas_kernel_hint(); !hint.empty()) err << hint << "\n";
    }
    if (train_cmd->parsed()) return cmd_train(c, seed_given, out);
    if (eval_cmd->parsed()) return cmd_eval(c, checkpoint, segments, out);
    if (probe_cmd->parsed()) return cmd_probe(c, probe, out);
    if (shuffle_cmd->parsed()) return cmd_shuffle(c, checkpoint, samples, identity, shuffle_label, out);
    if (ablate_cmd->parsed()) return cmd_ablate(c, manifest, cells, out);
    if (mlm_cmd->parsed()) return cmd_mlm(c, seed_given, strategies, out);
    if (report_cmd->parsed()) return cmd_report(inputs, c.output, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace poslab::cli
