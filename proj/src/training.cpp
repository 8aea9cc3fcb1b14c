// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/training.hpp"

#include <cblas.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <thread>

#include "poslab/error.hpp"
#include "poslab/ops.hpp"

namespace poslab {

Objective parse_objective(std::string_view name) {
  if (name == "causal_lm") return Objective::causal_lm;
  if (name == "mlm") return Objective::mlm;
  throw ConfigError("unknown objective '" + std::string(name) + "' (expected causal_lm or mlm)");
}

std::string_view objective_name(Objective objective) {
  return objective == Objective::causal_lm ? "causal_lm" : "mlm";
}

// ---------------------------------------------------------------- RunConfig

namespace {

const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys = {
      "corpus",          "mlm.probability",    "model.d_ff",
      "model.d_model",   "model.dropout",      "model.max_seq_len",
      "model.n_heads",   "model.n_layers",     "model.strategy",
      "objective",       "output_dir",         "seed",
      "tokenizer",       "train.adam_eps",     "train.beta1",
      "train.beta2",     "train.eval_chunks",  "train.eval_interval",
      "train.grad_clip", "train.peak_lr",      "train.tokens_per_batch",
      "train.total_steps", "train.warmup_steps", "train.weight_decay",
      "valid_fraction",  "word_vocab",
  };
  return keys;
}

std::size_t kv_size(const KeyValues& kv, const std::string& key) {
  const auto v = kv_int(kv, key);
  if (v < 0) throw UsageError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

void RunConfig::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("train.peak_lr must be positive");
  if (warmup_steps > total_steps) {
    throw ConfigError("train.warmup_steps (" + std::to_string(warmup_steps) +
                      ") exceeds train.total_steps (" + std::to_string(total_steps) + ")");
  }
  if (tokens_per_batch < seq_len()) {
    throw ConfigError("train.tokens_per_batch must be at least model.max_seq_len");
  }
  if (eval_interval == 0) throw ConfigError("train.eval_interval must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(mlm_probability > 0.0 && mlm_probability <= 1.0)) {
    throw ConfigError("mlm.probability must lie in (0, 1]");
  }
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must lie in (0, 1)");
  }
  if (tokenizer == TokenizerKind::word && word_vocab == 0) {
    throw ConfigError("tokenizer=word requires word_vocab > 0");
  }
  resolved_model(tokenizer == TokenizerKind::byte ? kByteVocabSize : word_vocab + 1).validate();
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  kv.erase("model.vocab_size");
  kv.erase("model.causal");
  kv.erase("model.seed");
  kv["objective"] = objective_name(objective);
  kv["seed"] = std::to_string(seed);
  kv["corpus"] = corpus;
  kv["tokenizer"] = tokenizer_name(tokenizer);
  kv["word_vocab"] = std::to_string(word_vocab);
  kv["valid_fraction"] = format_double(valid_fraction);
  kv["output_dir"] = output_dir;
  kv["train.peak_lr"] = format_double(peak_lr);
  kv["train.warmup_steps"] = std::to_string(warmup_steps);
  kv["train.total_steps"] = std::to_string(total_steps);
  kv["train.tokens_per_batch"] = std::to_string(tokens_per_batch);
  kv["train.weight_decay"] = format_double(weight_decay);
  kv["train.beta1"] = format_double(beta1);
  kv["train.beta2"] = format_double(beta2);
  kv["train.adam_eps"] = format_double(adam_eps);
  kv["train.grad_clip"] = format_double(grad_clip);
  kv["train.eval_interval"] = std::to_string(eval_interval);
  kv["train.eval_chunks"] = std::to_string(eval_chunks);
  kv["mlm.probability"] = format_double(mlm_probability);
  return kv;
}

std::vector<std::string> RunConfig::keys() { return run_keys(); }

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  const auto& valid = run_keys();
  for (const auto& [key, value] : kv) {
    if (std::find(valid.begin(), valid.end(), key) == valid.end()) {
      std::string msg = "unknown config key '" + key + "'";
      if (const auto hint = closest_match(key, valid); !hint.empty()) {
        msg += " (did you mean '" + hint + "'?)";
      }
      throw UsageError(msg);
    }
  }
  RunConfig r;
  r.model = ModelConfig::from_key_values(kv);
  auto size_of = [&](const char* key, std::size_t& out) {
    if (kv.contains(key)) out = kv_size(kv, key);
  };
  auto real_of = [&](const char* key, double& out) {
    if (kv.contains(key)) out = kv_double(kv, key);
  };
  if (kv.contains("objective")) r.objective = parse_objective(kv.at("objective"));
  if (kv.contains("seed")) r.seed = kv_size(kv, "seed");
  if (kv.contains("corpus")) r.corpus = kv.at("corpus");
  if (kv.contains("tokenizer")) r.tokenizer = parse_tokenizer_kind(kv.at("tokenizer"));
  if (kv.contains("output_dir")) r.output_dir = kv.at("output_dir");
  size_of("word_vocab", r.word_vocab);
  real_of("valid_fraction", r.valid_fraction);
  real_of("train.peak_lr", r.peak_lr);
  size_of("train.warmup_steps", r.warmup_steps);
  size_of("train.total_steps", r.total_steps);
  size_of("train.tokens_per_batch", r.tokens_per_batch);
  real_of("train.weight_decay", r.weight_decay);
  real_of("train.beta1", r.beta1);
  real_of("train.beta2", r.beta2);
  real_of("train.adam_eps", r.adam_eps);
  real_of("train.grad_clip", r.grad_clip);
  size_of("train.eval_interval", r.eval_interval);
  size_of("train.eval_chunks", r.eval_chunks);
  real_of("mlm.probability", r.mlm_probability);
  if (r.objective == Objective::mlm && !kv.contains("model.dropout")) r.model.dropout = kMlmDropout;
  r.model = r.resolved_model(r.tokenizer == TokenizerKind::byte ? kByteVocabSize : r.word_vocab + 1);
  return r;
}

ModelConfig RunConfig::resolved_model(std::size_t corpus_vocab) const {
  ModelConfig m = model;
  m.vocab_size = corpus_vocab + (objective == Objective::mlm ? 1 : 0);
  m.causal = objective == Objective::causal_lm;
  m.seed = seed;
  return m;
}

// ---------------------------------------------------------------- optimizer

double lr_at(std::size_t step, double peak_lr, std::size_t warmup, std::size_t total) {
  if (step > total) throw ConfigError("lr_at: step beyond total_steps");
  if (step < warmup) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return peak_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  const double floor = kFinalLrFraction * peak_lr;
  return floor + (peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void adam_step(std::span<const Tensor<T>> params, std::span<const bool> decay,
               AdamState<T>& state, double lr, const AdamOptions& o) {
  if (decay.size() != params.size()) throw ContractError("adam_step: decay flags size mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), T(0));
      state.v[i].assign(params[i].numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state/parameter mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        std::ostringstream os;
        os << "non-finite gradient in parameter " << i << " " << shape_str(params[i].shape())
           << " at flat index " << j << ": " << g[j];
        throw NumericalError(os.str());
      }
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const T shrink = decay[i] ? static_cast<T>(1.0 - lr * o.weight_decay) : T(1);
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      p[j] = static_cast<T>(p[j] * shrink - lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

template <typename T>
double clip_global_norm(std::span<const Tensor<T>> params, double threshold) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const T s = static_cast<T>(threshold / norm);
    for (const auto& p : params) {
      for (T& g : p.grad()) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------- evaluation

double EvalTotals::mean_loss() const {
  if (tokens == 0) throw EmptyLossError("evaluation scored no tokens");
  return loss_sum / static_cast<double>(tokens);
}

double EvalTotals::perplexity() const { return std::exp(mean_loss()); }

std::vector<double> EvalTotals::segment_perplexity() const {
  std::vector<double> out(segment_loss_sum.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (segment_tokens[s] == 0) throw EmptyLossError("segment " + std::to_string(s) + " is empty");
    out[s] = std::exp(segment_loss_sum[s] / static_cast<double>(segment_tokens[s]));
  }
  return out;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("POSLAB_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != nullptr && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
    throw UsageError("POSLAB_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string blas_kernel_hint() {
#if defined(__x86_64__)
  const std::string core = openblas_get_corename();
  for (const char* generic : {"Prescott", "Core2", "Penryn", "Dunnington", "Nehalem", "Atom"}) {
    if (core != generic) continue;
    const char* better = __builtin_cpu_supports("avx512f") ? "SkylakeX"
                         : __builtin_cpu_supports("avx2") ? "Haswell"
                                                          : nullptr;
    if (better == nullptr) return {};
    return "note: OpenBLAS is using generic " + core + " kernels; export OPENBLAS_CORETYPE=" +
           better + " for faster training";
  }
#endif
  return {};
}

namespace {

struct ChunkLoss {
  double loss = 0.0;
  std::size_t tokens = 0;
  std::vector<double> seg_loss;
  std::vector<std::size_t> seg_tokens;
};

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

template <typename T>
EvalTotals evaluate_stream(const TransformerLM<T>& model, std::span<const std::int32_t> stream,
                           std::size_t length, const EvalOptions& o) {
  if (o.n_segments == 0 || length % o.n_segments != 0) {
    throw ConfigError("sequence length " + std::to_string(length) + " is not divisible into " +
                      std::to_string(o.n_segments) + " segments");
  }
  if (o.objective == Objective::mlm && o.base_vocab == 0) {
    throw ContractError("MLM evaluation needs the base vocabulary size");
  }
  auto offsets = chunk_offsets(stream.size(), length);
  if (o.max_chunks > 0 && offsets.size() > o.max_chunks) offsets.resize(o.max_chunks);
  if (offsets.empty()) {
    throw ContractError("evaluation stream of " + std::to_string(stream.size()) +
                        " tokens holds no chunk of " + std::to_string(length + 1));
  }
  const std::size_t per_batch = std::max<std::size_t>(1, o.batch_chunks);
  const std::size_t n_batches = (offsets.size() + per_batch - 1) / per_batch;
  const std::size_t seg_len = length / o.n_segments;
  std::vector<ChunkLoss> results(offsets.size());

  auto run_batch = [&](std::size_t bi) {
    NoGradScope<T> no_grad;
    const std::size_t begin = bi * per_batch, end = std::min(offsets.size(), begin + per_batch);
    std::span<const std::size_t> picked(offsets.data() + begin, end - begin);
    TokenBatch batch = make_lm_batch(stream, picked, length);
    if (o.objective == Objective::mlm) {
      for (std::size_t c = 0; c < picked.size(); ++c) {
        TokenBatch one;
        one.batch = 1;
        one.length = length;
        one.inputs.assign(batch.inputs.begin() + c * length, batch.inputs.begin() + (c + 1) * length);
        const auto mask_id = static_cast<std::int32_t>(o.base_vocab);
        TokenBatch corrupted =
            mlm_corrupt(one, o.mlm_probability, mask_id, o.base_vocab, mix_seed(o.mlm_seed, begin + c));
        std::copy(corrupted.inputs.begin(), corrupted.inputs.end(), batch.inputs.begin() + c * length);
        std::copy(corrupted.targets.begin(), corrupted.targets.end(),
                  batch.targets.begin() + c * length);
      }
    }
    const auto out = model.forward(batch.inputs, picked.size(), length);
    const auto nll = row_nll(out.logits, batch.targets, std::optional<std::int32_t>(kIgnoreIndex));
    for (std::size_t c = 0; c < picked.size(); ++c) {
      ChunkLoss& r = results[begin + c];
      r.seg_loss.assign(o.n_segments, 0.0);
      r.seg_tokens.assign(o.n_segments, 0);
      for (std::size_t p = 0; p < length; ++p) {
        const double v = nll[c * length + p];
        if (std::isnan(v)) continue;
        r.loss += v;
        ++r.tokens;
        r.seg_loss[p / seg_len] += v;
        ++r.seg_tokens[p / seg_len];
      }
    }
  };

  const std::size_t threads =
      std::min(n_batches, o.threads > 0 ? o.threads : worker_threads());
  if (threads <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t b = t; b < n_batches; b += threads) run_batch(b);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalTotals totals;
  totals.segment_loss_sum.assign(o.n_segments, 0.0);
  totals.segment_tokens.assign(o.n_segments, 0);
  for (const auto& r : results) {
    totals.loss_sum += r.loss;
    totals.tokens += r.tokens;
    for (std::size_t s = 0; s < o.n_segments; ++s) {
      totals.segment_loss_sum[s] += r.seg_loss[s];
      totals.segment_tokens[s] += r.seg_tokens[s];
    }
  }
  return totals;
}

template <typename T>
double evaluate_perplexity(const TransformerLM<T>& model, std::span<const std::int32_t> stream,
                           std::size_t length) {
  return evaluate_stream(model, stream, length, EvalOptions{}).perplexity();
}

template <typename T>
std::vector<double> per_segment_perplexity(const TransformerLM<T>& model,
                                           std::span<const std::int32_t> stream,
                                           std::size_t length, std::size_t n_segments) {
  EvalOptions o;
  o.n_segments = n_segments;
  return evaluate_stream(model, stream, length, o).segment_perplexity();
}

// ---------------------------------------------------------------- reports

const TrainRecord& TrainReport::final_valid() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->split == "valid") return *it;
  }
  throw ContractError("report has no validation record");
}

const TrainRecord& TrainReport::initial_valid() const {
  for (const auto& r : records) {
    if (r.split == "valid") return r;
  }
  throw ContractError("report has no validation record");
}

std::string format_report_csv(const TrainReport& report, bool include_seconds) {
  std::string out = include_seconds ? kReportCsvHeader : "step,split,loss,perplexity,lr";
  out += '\n';
  for (const auto& r : report.records) {
    out += std::to_string(r.step) + ',' + r.split + ',' + format_double(r.loss) + ',' +
           format_double(r.perplexity) + ',' + format_double(r.lr);
    if (include_seconds) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
      out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << format_report_csv(report);
  if (!out) throw IoError("failed writing report " + path.string());
}

// ---------------------------------------------------------------- train

Corpus load_run_corpus(const RunConfig& run) {
  if (run.corpus.empty()) throw UsageError("missing required key 'corpus'");
  return load_corpus(run.corpus, run.tokenizer, run.word_vocab, run.valid_fraction);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

TrainResult train(const RunConfig& run, const Corpus& corpus, const ProgressFn& progress) {
  run.validate();
  retain_freed_memory();
  const ModelConfig mcfg = run.resolved_model(corpus.vocab_size);
  const std::size_t L = run.seq_len();
  const bool mlm = run.objective == Objective::mlm;
  const auto base_vocab = corpus.vocab_size;

  std::filesystem::path outdir;
  if (!run.output_dir.empty()) {
    outdir = run.output_dir;
    std::filesystem::create_directories(outdir);
    write_text(outdir / kResolvedConfigFile, format_key_values(run.to_key_values()));
    if (corpus.kind == TokenizerKind::word) corpus.vocab.save(outdir / "vocab.txt");
  }

  TrainResult result{TrainReport{}, TransformerLM<float>(mcfg)};
  TransformerLM<float>& model = result.model;
  TrainReport& report = result.report;
  const auto named = model.parameters();
  std::vector<Tensor<float>> params;
  std::unique_ptr<bool[]> decay(new bool[named.size()]);
  for (std::size_t i = 0; i < named.size(); ++i) {
    params.push_back(named[i].tensor);
    decay[i] = named[i].tensor.rank() == 2;
  }
  AdamState<float> adam;
  const AdamOptions adam_options{run.beta1, run.beta2, run.adam_eps, run.weight_decay};

  LmBatcher batcher(corpus.train(), L, run.tokens_per_batch, run.seed);
  std::mt19937_64 dropout_rng(mix_seed(run.seed, 1));
  EvalOptions eval;
  eval.objective = run.objective;
  eval.max_chunks = run.eval_chunks;
  eval.mlm_probability = run.mlm_probability;
  eval.mlm_seed = kEvalMaskSeed;
  eval.base_vocab = base_vocab;

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto finish = [&] {
    if (!outdir.empty()) {
      write_report_csv(report, outdir / kReportFile);
      if (!report.diverged) {
        save_checkpoint(model, outdir / kCheckpointFile);
        report.checkpoint_path = (outdir / kCheckpointFile).string();
      }
    }
  };
  auto diverge = [&](const std::string& why) {
    report.diverged = true;
    finish();
    throw DivergenceError("training diverged: " + why);
  };
  auto push = [&](TrainRecord rec) {
    report.records.push_back(rec);
    if (progress) progress(rec);
  };
  auto evaluate_valid = [&](std::size_t step, double lr) {
    double loss = 0.0;
    try {
      loss = evaluate_stream(model, corpus.valid(), L, eval).mean_loss();
    } catch (const NumericalError& e) {
      diverge(std::string("validation at step ") + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss)) diverge("validation loss is not finite at step " + std::to_string(step));
    push({step, "valid", loss, std::exp(loss), lr, elapsed()});
  };

  evaluate_valid(0, lr_at(0, run.peak_lr, run.warmup_steps, run.total_steps));
  double train_sum = 0.0;
  std::size_t train_count = 0;
  for (std::size_t step = 1; step <= run.total_steps; ++step) {
    const double lr = lr_at(step, run.peak_lr, run.warmup_steps, run.total_steps);
    TokenBatch batch = batcher.next();
    if (mlm) {
      batch = mlm_corrupt(batch, run.mlm_probability, static_cast<std::int32_t>(base_vocab),
                          base_vocab, mix_seed(run.seed, step + 2));
    }
    for (auto& p : params) p.zero_grad();
    try {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      const auto out = model.forward(batch.inputs, batch.batch, batch.length, false,
                                     mcfg.dropout > 0.0 ? &dropout_rng : nullptr);
      const Tensor<float> loss =
          mlm ? cross_entropy(out.logits, batch.targets, std::optional<std::int32_t>(kIgnoreIndex))
              : cross_entropy(out.logits, batch.targets);
      const double value = loss.item();
      if (!std::isfinite(value)) diverge("training loss is not finite at step " + std::to_string(step));
      tape.backward(loss);
      clip_global_norm<float>(params, run.grad_clip);
      adam_step<float>(params, std::span<const bool>(decay.get(), params.size()), adam, lr,
                       adam_options);
      train_sum += value;
      ++train_count;
    } catch (const EmptyLossError&) {
      // no position was selected for corruption in this batch
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericalError& e) {
      diverge(std::string("step ") + std::to_string(step) + ": " + e.what());
    }
    if (step % run.eval_interval == 0 || step == run.total_steps) {
      if (train_count > 0) {
        const double mean = train_sum / static_cast<double>(train_count);
        push({step, "train", mean, std::exp(mean), lr, elapsed()});
      }
      train_sum = 0.0;
      train_count = 0;
      evaluate_valid(step, lr);
    }
  }
  finish();
  return result;
}

// ---------------------------------------------------------------- instantiation

#define POSLAB_INSTANTIATE_TRAINING(T)                                                          \
  template void adam_step<T>(std::span<const Tensor<T>>, std::span<const bool>, AdamState<T>&, \
                             double, const AdamOptions&);                                      \
  template double clip_global_norm<T>(std::span<const Tensor<T>>, double);                      \
  template EvalTotals evaluate_stream<T>(const TransformerLM<T>&, std::span<const std::int32_t>, \
                                         std::size_t, const EvalOptions&);                      \
  template double evaluate_perplexity<T>(const TransformerLM<T>&,                               \
                                         std::span<const std::int32_t>, std::size_t);           \
  template std::vector<double> per_segment_perplexity<T>(                                       \
      const TransformerLM<T>&, std::span<const std::int32_t>, std::size_t, std::size_t);

POSLAB_INSTANTIATE_TRAINING(float)
POSLAB_INSTANTIATE_TRAINING(double)

}  // namespace poslab
