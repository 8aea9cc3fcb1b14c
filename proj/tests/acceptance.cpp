// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Trained toy models are
// cached under the work directory and reused when their resolved config is
// unchanged (--fresh retrains).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "poslab/error.hpp"
#include "poslab/experiments.hpp"
#include "poslab/grad_check.hpp"
#include "poslab/ops.hpp"
#include "poslab/probing.hpp"
#include "poslab/training.hpp"

namespace poslab {
namespace {

namespace fs = std::filesystem;
using TD = Tensor<double>;
using Model = TransformerLM<float>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- helpers

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

TD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return TD(std::move(shape), std::move(v));
}

std::vector<std::int32_t> random_ids(std::size_t n, std::int32_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int32_t> u(0, vocab - 1);
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = u(rng);
  return ids;
}

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(std::set<int> only) : only_(std::move(only)) {}
  bool wants(int id) const { return only_.empty() || only_.contains(id); }
  void report(int id, const std::string& name, bool pass, const std::string& detail) {
    verdicts_.push_back({id, name, pass, detail});
    std::printf("%s  %2d  %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  int finish() const {
    int failed = 0;
    for (const auto& v : verdicts_) failed += v.pass ? 0 : 1;
    std::printf("%zu criteria, %d failed\n", verdicts_.size(), failed);
    return failed == 0 ? 0 : 1;
  }

 private:
  std::set<int> only_;
  std::vector<Verdict> verdicts_;
};

// ---------------------------------------------------------------- trained models

struct Zoo {
  fs::path root;
  bool fresh = false;
  Corpus corpus;
  std::map<std::string, Model> causal, mlm;
  std::map<std::string, RunConfig> runs;
};

Model obtain(Zoo& zoo, const RunConfig& run, const std::string& label) {
  const fs::path dir(run.output_dir);
  const std::string expected = format_key_values(run.to_key_values());
  if (!zoo.fresh && fs::exists(dir / kCheckpointFile) && slurp(dir / kResolvedConfigFile) == expected) {
    std::fprintf(stderr, "[%s] reusing %s\n", label.c_str(), (dir / kCheckpointFile).c_str());
    return load_checkpoint<float>(dir / kCheckpointFile);
  }
  std::fprintf(stderr, "[%s] training %zu steps\n", label.c_str(), run.total_steps);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(run, zoo.corpus, [&](const TrainRecord& rec) {
    if (rec.split == "valid") {
      std::fprintf(stderr, "[%s] step %5zu valid ppl %.3f  %.0fs\n", label.c_str(), rec.step,
                   rec.perplexity, rec.seconds);
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%s] trained in %.0f s\n", label.c_str(), secs);
  return std::move(r.model);
}

void load_grid(Zoo& zoo, const fs::path& manifest, std::map<std::string, Model>& into) {
  Grid grid = read_manifest(manifest);
  for (auto& run : grid.runs) {
    if (fs::path(run.config.corpus).is_relative()) {
      run.config.corpus = (fs::path(POSLAB_SOURCE_DIR) / run.config.corpus).string();
    }
  }
  const auto configs = expand_grid(grid, zoo.root);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const std::string strategy(positional_name(configs[i].model.strategy));
    into.emplace(strategy, obtain(zoo, configs[i], cell_label(grid, i)));
    zoo.runs.emplace(grid.name + "/" + strategy, configs[i]);
  }
}

double masked_perplexity(const Zoo& zoo, const Model& m, const RunConfig& run) {
  EvalOptions o;
  o.objective = Objective::mlm;
  o.base_vocab = zoo.corpus.vocab_size;
  o.mlm_probability = run.mlm_probability;
  return evaluate_stream(m, zoo.corpus.valid(), m.config().max_seq_len, o).perplexity();
}

// ---------------------------------------------------------------- 1

void gradient_correctness(Suite& s) {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_op;
  std::size_t coords = 0;
  auto check = [&](const std::string& op, const std::function<TD()>& loss, std::vector<TD> inputs) {
    for (auto& t : inputs) t.set_requires_grad(true);
    const GradCheckReport r = grad_check_inputs(loss, std::move(inputs), 1e-5);
    coords += r.coordinates_checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_op = op;
    }
  };
  const TD mask({3, 3}, {0, -kInf, -kInf, -0.5, 0, -kInf, -1, -0.5, 0});
  for (int trial = 0; trial < 5; ++trial) {
    TD x = random_tensor({2, 3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng),
       wt = random_tensor({5, 4}, rng), c = random_tensor({2, 3, 5}, rng);
    check("linear", [&] { return sum(mul(linear(x, w, b), c)); }, {x, w, b});
    check("linear_transposed", [&] { return sum(mul(linear(x, wt, b, true), c)); }, {x, wt, b});
    TD a2 = random_tensor({3, 4}, rng), c2 = random_tensor({3, 5}, rng);
    check("matmul", [&] { return sum(mul(matmul(a2, w), c2)); }, {a2, w});
    TD ba = random_tensor({2, 2, 3, 4}, rng), bb = random_tensor({2, 2, 5, 4}, rng),
       bc = random_tensor({2, 2, 3, 5}, rng);
    check("batched_matmul", [&] { return sum(mul(batched_matmul(ba, bb, true), bc)); }, {ba, bb});
    TD sx = random_tensor({2, 3, 3}, rng, -2, 2), sc = random_tensor({2, 3, 3}, rng);
    check("masked_softmax", [&] { return sum(mul(softmax_rows(sx, mask), sc)); }, {sx});
    TD lx = random_tensor({3, 5}, rng, -2, 2), lg = random_tensor({5}, rng), lb = random_tensor({5}, rng),
       lc = random_tensor({3, 5}, rng);
    check("layer_norm", [&] { return sum(mul(layer_norm(lx, lg, lb, 1e-5), lc)); }, {lx, lg, lb});
    TD gx = random_tensor({12}, rng, -3, 3), gc = random_tensor({12}, rng);
    check("gelu", [&] { return sum(mul(activation(gx, Activation::gelu), gc)); }, {gx});
    TD table = random_tensor({7, 4}, rng), proj = random_tensor({4, 7}, rng);
    const auto ids = random_ids(6, 7, rng);
    const auto targets = random_ids(6, 7, rng);
    check("embedding_cross_entropy",
          [&] { return cross_entropy(linear(embedding_gather(table, ids, {2, 3}), proj), targets); },
          {table, proj});
    TD hx = random_tensor({2, 3, 6}, rng), pos = random_tensor({5, 6}, rng);
    check("positions_heads", [&] {
      TD h = split_heads(add(hx, rows(pos, 0, 3)), 3);
      TD back = merge_heads(mul(h, h));
      return sum(back);
    }, {hx, pos});
  }
  for (PositionalKind kind : kAllPositionalKinds) {
    for (bool causal : {true, false}) {
      ModelConfig c;
      c.n_layers = 2;
      c.d_model = 8;
      c.d_ff = 16;
      c.n_heads = 2;
      c.vocab_size = 7;
      c.max_seq_len = 5;
      c.strategy = kind;
      c.causal = causal;
      c.seed = 7;
      const TransformerLM<double> m(c);
      std::vector<TD> params;
      for (auto& p : m.parameters()) {
        for (double& v : p.tensor.data()) v += 0.3 * std::uniform_real_distribution<double>(-1, 1)(rng);
        params.push_back(p.tensor);
      }
      const auto ids = random_ids(10, 7, rng);
      const auto targets = random_ids(10, 7, rng);
      check(std::string("model_") + std::string(positional_name(kind)) + (causal ? "_causal" : "_bidir"),
            [&] { return cross_entropy(m.forward(ids, 2, 5).logits, targets); }, params);
    }
  }
  s.report(1, "gradient correctness", worst < 1e-4,
           "max rel err " + fmt("%.2e", worst) + " at " + worst_op + " over " + std::to_string(coords) +
               " coordinates (< 1e-4)");
}

// ---------------------------------------------------------------- 2

void order_invariance(Suite& s, const Zoo& zoo) {
  std::mt19937_64 rng(202);
  ModelConfig c;
  c.strategy = PositionalKind::nopos;
  c.causal = false;
  c.seed = 3;
  const TransformerLM<double> bidir(c);
  const std::size_t L = c.max_seq_len, V = c.vocab_size;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto ids = random_ids(L, static_cast<std::int32_t>(V), rng);
    std::vector<std::size_t> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int32_t> permuted(L);
    for (std::size_t i = 0; i < L; ++i) permuted[i] = ids[perm[i]];
    const TD ta = bidir.forward(ids, 1, L).logits, tb = bidir.forward(permuted, 1, L).logits;
    const auto a = ta.data(), b = tb.data();
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t v = 0; v < V; ++v) worst = std::max(worst, std::abs(b[i * V + v] - a[perm[i] * V + v]));
    }
  }
  s.report(2, "order invariance (a)", worst < 1e-6,
           "bidirectional NoPos max |f(Px) - Pf(x)| " + fmt("%.2e", worst) + " over 50 permutations (< 1e-6)");

  const Model& nopos = zoo.causal.at("nopos");
  const auto valid = zoo.corpus.valid();
  const std::size_t chunks = valid.size() / L;
  int sensitive = 0;
  double smallest = kInf;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t chunk = std::uniform_int_distribution<std::size_t>(0, chunks - 1)(rng);
    std::vector<std::int32_t> ids(valid.begin() + chunk * L, valid.begin() + (chunk + 1) * L);
    std::vector<std::int32_t> permuted = ids;
    while (permuted == ids) std::shuffle(permuted.begin(), permuted.end() - 1, rng);
    const Tensor<float> ta = nopos.forward(ids, 1, L).logits, tb = nopos.forward(permuted, 1, L).logits;
    const auto a = ta.data(), b = tb.data();
    double diff = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      diff = std::max(diff, std::abs(double(a[(L - 1) * V + v]) - double(b[(L - 1) * V + v])));
    }
    smallest = std::min(smallest, diff);
    sensitive += diff > 1e-3 ? 1 : 0;
  }
  s.report(2, "order invariance (b)", sensitive >= 45,
           "causal 4-layer NoPos: " + std::to_string(sensitive) +
               "/50 prefix permutations move last-position logits by > 1e-3 (>= 45; smallest " +
               fmt("%.2e", smallest) + ")");
}

// ---------------------------------------------------------------- 3

void causal_no_leak(Suite& s, const Zoo& zoo) {
  std::mt19937_64 rng(303);
  std::size_t leaks = 0, trials = 0;
  for (const auto& [name, m] : zoo.causal) {
    const std::size_t L = m.config().max_seq_len, V = m.config().vocab_size;
    for (int trial = 0; trial < 100; ++trial, ++trials) {
      auto ids = random_ids(L, static_cast<std::int32_t>(V), rng);
      const std::size_t p = std::uniform_int_distribution<std::size_t>(1, L - 1)(rng);
      auto altered = ids;
      for (std::size_t i = p; i < L; ++i) altered[i] = static_cast<std::int32_t>((ids[i] + 1 + rng() % (V - 1)) % V);
      const Tensor<float> ta = m.forward(ids, 1, L).logits, tb = m.forward(altered, 1, L).logits;
      const auto a = ta.data(), b = tb.data();
      if (std::memcmp(a.data(), b.data(), p * V * sizeof(float)) != 0) ++leaks;
    }
  }
  s.report(3, "causal no-leak", leaks == 0,
           std::to_string(trials) + " suffix edits over " + std::to_string(zoo.causal.size()) +
               " strategies, " + std::to_string(leaks) + " changed an earlier logit bitwise (0 allowed)");
}

// ---------------------------------------------------------------- 4, 5

std::map<std::string, double> causal_perplexities(const Zoo& zoo) {
  std::map<std::string, double> ppl;
  for (const auto& [name, m] : zoo.causal) {
    ppl[name] = evaluate_perplexity(m, zoo.corpus.valid(), m.config().max_seq_len);
  }
  return ppl;
}

void causal_grid(Suite& s, const std::map<std::string, double>& ppl) {
  std::string all;
  for (const auto& [name, v] : ppl) all += name + "=" + fmt("%.3f", v) + " ";
  std::printf("      causal valid ppl: %s\n", all.c_str());
  const double ratio = ppl.at("nopos") / ppl.at("learned");
  s.report(4, "causal grid: nopos vs learned", ratio <= 1.10,
           "ppl(nopos)/ppl(learned) = " + fmt("%.4f", ratio) + " (<= 1.10)");
  s.report(4, "causal grid: alibi vs nopos", ppl.at("alibi") <= ppl.at("nopos"),
           "ppl(alibi) " + fmt("%.3f", ppl.at("alibi")) + " vs ppl(nopos) " + fmt("%.3f", ppl.at("nopos")) +
               " (alibi <= nopos)");
}

void mlm_grid(Suite& s, const Zoo& zoo, const std::map<std::string, double>& causal_ppl) {
  std::map<std::string, double> ppl;
  for (const auto& [name, m] : zoo.mlm) ppl[name] = masked_perplexity(zoo, m, zoo.runs.at("toy-mlm/" + name));
  const double mlm_ratio = ppl.at("nopos") / ppl.at("learned");
  const double causal_ratio = causal_ppl.at("nopos") / causal_ppl.at("learned");
  std::printf("      masked ppl: nopos=%.3f learned=%.3f\n", ppl.at("nopos"), ppl.at("learned"));
  s.report(5, "mlm grid: nopos vs learned", mlm_ratio >= 3.0,
           "masked ppl(nopos)/ppl(learned) = " + fmt("%.3f", mlm_ratio) + " (>= 3)");
  s.report(5, "mlm vs causal gap", causal_ratio < 1.25,
           "causal ppl(nopos)/ppl(learned) = " + fmt("%.4f", causal_ratio) + " (< 1.25)");
}

// ---------------------------------------------------------------- 6

void probing(Suite& s, const Zoo& zoo) {
  bool exact = true;
  for (std::size_t L : {1, 2, 16, 128}) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) total += i > j ? i - j : j - i;
    }
    exact &= random_baseline_mad(L) == static_cast<double>(total) / static_cast<double>(L * L);
  }
  exact &= random_baseline_mad(2) == 0.5;
  s.report(6, "random baseline", exact, "closed form equals brute-force enumeration for L in {1,2,16,128}");

  const Model& nopos = zoo.causal.at("nopos");
  const std::size_t L = nopos.config().max_seq_len;
  const double base = random_baseline_mad(L);
  const ProbeConfig pc;
  const auto curve = probe_layers(nopos, zoo.corpus.valid(), L, pc, {});
  std::string mads;
  double best = kInf;
  for (const auto& r : curve) {
    mads += fmt("%.2f", r.mad) + " ";
    best = std::min(best, r.mad);
  }
  std::printf("      nopos MAD by layer: %s(baseline %.3f)\n", mads.c_str(), base);
  const double l0 = curve.front().mad;
  s.report(6, "probe nopos layer 0", std::abs(l0 - base) <= 0.10 * base,
           "MAD " + fmt("%.3f", l0) + " vs baseline " + fmt("%.3f", base) + " (within 10%: " +
               fmt("%.1f", 100.0 * (l0 - base) / base) + "%)");
  s.report(6, "probe nopos best layer", best < 0.5 * base,
           "min MAD " + fmt("%.3f", best) + " (< " + fmt("%.3f", 0.5 * base) + ")");
  const std::size_t layer0[] = {0};
  const auto sin0 = probe_layers(zoo.causal.at("sinusoidal"), zoo.corpus.valid(), L, pc, layer0);
  s.report(6, "probe sinusoidal layer 0", sin0.front().mad < 0.1 * base,
           "MAD " + fmt("%.3f", sin0.front().mad) + " (< " + fmt("%.3f", 0.1 * base) + ")");
}

// ---------------------------------------------------------------- 7

void shuffled_prefix(Suite& s, const Zoo& zoo) {
  const Model& nopos = zoo.causal.at("nopos");
  const ShuffleOutcome o = shuffle_prefix_eval(nopos, zoo.corpus.valid(), 200, 7);
  s.report(7, "shuffled prefix", o.mean_shuffled > o.mean_intact && o.test.p_value < 0.01,
           "mean loss intact " + fmt("%.4f", o.mean_intact) + " shuffled " + fmt("%.4f", o.mean_shuffled) +
               ", one-sided p " + fmt("%.2e", o.test.p_value) + " (< 0.01)");
  const ShuffleOutcome id = shuffle_prefix_eval(nopos, zoo.corpus.valid(), 200, 7, true);
  std::size_t differ = 0;
  for (const auto& smp : id.samples) {
    differ += std::memcmp(&smp.intact_loss, &smp.shuffled_loss, sizeof(double)) != 0 ? 1 : 0;
  }
  s.report(7, "identity control", differ == 0,
           std::to_string(differ) + "/200 identity-permuted losses differ bitwise (0 allowed)");
}

// ---------------------------------------------------------------- 8

void segments(Suite& s, const Zoo& zoo) {
  double worst = 0.0;
  bool ordered = true;
  std::string detail;
  for (const auto& [name, m] : zoo.causal) {
    EvalOptions o;
    o.n_segments = 8;
    const EvalTotals t = evaluate_stream(m, zoo.corpus.valid(), m.config().max_seq_len, o);
    const auto seg = t.segment_perplexity();
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      weighted += static_cast<double>(t.segment_tokens[i]) * std::log(seg[i]);
      tokens += t.segment_tokens[i];
    }
    const double overall = t.perplexity();
    worst = std::max(worst, std::abs(std::exp(weighted / static_cast<double>(tokens)) - overall) / overall);
    ordered &= seg.front() > seg.back();
    std::string row;
    for (double v : seg) row += fmt("%.2f", v) + " ";
    std::printf("      %-10s segments: %s\n", name.c_str(), row.c_str());
    detail += name + " " + fmt("%.3f", seg.front()) + ">" + fmt("%.3f", seg.back()) +
              (seg.front() > seg.back() ? "" : " (no)") + "; ";
  }
  s.report(8, "segment partition identity", worst < 1e-9,
           "max relative gap " + fmt("%.2e", worst) + " (< 1e-9)");
  s.report(8, "segment 0 above segment 7", ordered, detail);
}

// ---------------------------------------------------------------- 9

std::string timeless(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

std::vector<std::pair<fs::path, std::string>> csv_tree(const fs::path& dir) {
  std::vector<std::pair<fs::path, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const std::string body = slurp(e.path());
    files.emplace_back(fs::relative(e.path(), dir),
                       e.path().filename() == kReportFile ? timeless(body) : body);
  }
  std::sort(files.begin(), files.end());
  return files;
}

void reproducibility(Suite& s, const fs::path& work) {
  const fs::path dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  spit(dir / "corpus.txt", slurp(fs::path(POSLAB_SOURCE_DIR) / "data" / "corpus.txt").substr(0, 40000));
  const std::string base = "corpus = " + (dir / "corpus.txt").string() +
                           "\nmodel.n_layers = 2\nmodel.d_model = 32\nmodel.d_ff = 64\nmodel.n_heads = 2\n"
                           "model.max_seq_len = 32\ntrain.total_steps = 20\ntrain.warmup_steps = 4\n"
                           "train.eval_interval = 10\ntrain.tokens_per_batch = 256\n";
  spit(dir / "run.cfg", base);
  spit(dir / "grid.cfg", base + "experiment = repro\n[run]\nmodel.strategy = nopos\n[run]\nmodel.strategy = alibi\n");
  auto invoke = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "poslab");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
  };
  int failures = 0;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    failures += invoke({"train", "-c", (dir / "run.cfg").string(), "-s", "model.strategy=learned", "-o",
                        (dir / t / "train").string(), "--seed", "5", "-q"});
    failures += invoke({"probe", "--checkpoint", (dir / t / "train").string(), "--steps", "50", "-o",
                        (dir / t / "probe").string(), "-q"});
    failures += invoke({"ablate", "-m", (dir / "grid.cfg").string(), "-o", (dir / t / "ablate").string(), "-q"});
  }
  std::size_t compared = 0, differing = 0;
  for (const char* sub : {"train", "probe", "ablate"}) {
    const auto a = csv_tree(dir / "a" / sub), b = csv_tree(dir / "b" / sub);
    compared += a.size();
    if (a.size() != b.size() || a.empty()) {
      ++differing;
      continue;
    }
    for (std::size_t i = 0; i < a.size(); ++i) differing += a[i] != b[i] ? 1 : 0;
  }
  s.report(9, "reproducibility", failures == 0 && differing == 0,
           "train/probe/ablate run twice: " + std::to_string(compared) + " CSV files, " +
               std::to_string(differing) + " differ (wall-time column excluded)");
}

// ---------------------------------------------------------------- 10

void checkpoints(Suite& s, const fs::path& work) {
  std::mt19937_64 rng(1010);
  const fs::path dir = work / "ckpt";
  fs::create_directories(dir);
  std::size_t mismatches = 0, forwards = 0;
  for (PositionalKind kind : kAllPositionalKinds) {
    ModelConfig c;
    c.strategy = kind;
    c.seed = 11;
    Model m(c);
    // move off the initialization so every tensor carries distinct values
    for (auto& p : m.parameters()) {
      for (float& v : p.tensor.data()) v += 0.05f * std::uniform_real_distribution<float>(-1, 1)(rng);
    }
    const fs::path path = dir / (std::string(positional_name(kind)) + ".plab");
    save_checkpoint(m, path);
    const Model back = load_checkpoint<float>(path);
    for (int trial = 0; trial < 20; ++trial, ++forwards) {
      const std::size_t L = 1 + rng() % c.max_seq_len;
      const auto ids = random_ids(2 * L, static_cast<std::int32_t>(c.vocab_size), rng);
      const Tensor<float> ta = m.forward(ids, 2, L).logits, tb = back.forward(ids, 2, L).logits;
      const auto a = ta.data(), b = tb.data();
      if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) ++mismatches;
    }
  }
  s.report(10, "checkpoint round trip", mismatches == 0,
           std::to_string(forwards) + " forwards after save/load, " + std::to_string(mismatches) +
               " not bit-identical");

  const std::string bytes = slurp(dir / "learned.plab");
  std::vector<std::string> corrupt;
  for (int i = 0; i < 20; ++i) corrupt.push_back(bytes.substr(0, rng() % bytes.size()));
  std::string magic = bytes;
  magic[1] = '?';
  corrupt.push_back(magic);
  std::string version = bytes;
  version[4] = 7;
  corrupt.push_back(version);
  corrupt.push_back(bytes + std::string(3, '\0'));
  const auto name_at = bytes.find("tok_emb");
  if (name_at != std::string::npos) {
    std::string renamed = bytes;
    renamed[name_at] = 'X';
    corrupt.push_back(renamed);
  }
  std::size_t rejected = 0;
  for (const auto& bad : corrupt) {
    spit(dir / "bad.plab", bad);
    try {
      load_checkpoint<float>(dir / "bad.plab");
    } catch (const FormatError&) {
      ++rejected;
    } catch (const std::exception&) {
    }
  }
  s.report(10, "corrupt checkpoints", rejected == corrupt.size(),
           std::to_string(rejected) + "/" + std::to_string(corrupt.size()) +
               " corrupted files rejected with FormatError");
}

}  // namespace
}  // namespace poslab

int main(int argc, char** argv) {
  using namespace poslab;
  CLI::App app{"poslab acceptance suite"};
  std::string work = "acceptance_work";
  bool fresh = false;
  std::vector<int> only;
  app.add_option("--work", work, "directory for trained models and scratch files")->capture_default_str();
  app.add_flag("--fresh", fresh, "retrain even when cached checkpoints match");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  Suite suite(std::set<int>(only.begin(), only.end()));
  Zoo zoo;
  zoo.root = std::filesystem::absolute(work);
  zoo.fresh = fresh;
  if (const std::string hint = blas_kernel_hint(); !hint.empty()) std::fprintf(stderr, "%s\n", hint.c_str());
  try {
    if (suite.wants(1)) gradient_correctness(suite);
    if (suite.wants(10)) checkpoints(suite, zoo.root);
    if (suite.wants(9)) reproducibility(suite, zoo.root);

    const bool needs_causal = suite.wants(2) || suite.wants(3) || suite.wants(4) || suite.wants(5) ||
                              suite.wants(6) || suite.wants(7) || suite.wants(8);
    if (needs_causal) {
      zoo.corpus = load_corpus(std::filesystem::path(POSLAB_SOURCE_DIR) / "data" / "corpus.txt",
                               TokenizerKind::byte);
      load_grid(zoo, std::filesystem::path(POSLAB_SOURCE_DIR) / "configs" / "toy_causal.cfg", zoo.causal);
      if (suite.wants(5)) {
        load_grid(zoo, std::filesystem::path(POSLAB_SOURCE_DIR) / "configs" / "toy_mlm.cfg", zoo.mlm);
      }
    }
    if (suite.wants(2)) order_invariance(suite, zoo);
    if (suite.wants(3)) causal_no_leak(suite, zoo);
    if (suite.wants(4) || suite.wants(5)) {
      const auto ppl = causal_perplexities(zoo);
      if (suite.wants(4)) causal_grid(suite, ppl);
      if (suite.wants(5)) mlm_grid(suite, zoo, ppl);
    }
    if (suite.wants(6)) probing(suite, zoo);
    if (suite.wants(7)) shuffled_prefix(suite, zoo);
    if (suite.wants(8)) segments(suite, zoo);
  } catch (const std::exception& e) {
    std::printf("FAIL      aborted: %s\n", e.what());
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("elapsed %.0f s\n", secs);
  return suite.finish();
}
