// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "poslab/ops.hpp"

namespace poslab {

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || d_ff == 0 || n_heads == 0 || vocab_size == 0 ||
      max_seq_len == 0) {
    throw ConfigError("model extents must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (d_ff < d_model) throw ConfigError("d_ff must be at least d_model");
  if (strategy == PositionalKind::sinusoidal && d_model % 2 != 0) {
    throw ConfigError("sinusoidal positions need an even d_model");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::vector<std::string> ModelConfig::keys() {
  return {"model.n_layers",    "model.d_model",     "model.d_ff",
          "model.n_heads",     "model.vocab_size",  "model.max_seq_len",
          "model.strategy",    "model.causal",      "model.dropout",
          "model.seed"};
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"model.n_layers", std::to_string(n_layers)},
      {"model.d_model", std::to_string(d_model)},
      {"model.d_ff", std::to_string(d_ff)},
      {"model.n_heads", std::to_string(n_heads)},
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.max_seq_len", std::to_string(max_seq_len)},
      {"model.strategy", std::string(positional_name(strategy))},
      {"model.causal", causal ? "true" : "false"},
      {"model.dropout", format_double(dropout)},
      {"model.seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  auto size_of = [&](const char* key, std::size_t& out) {
    if (!kv.contains(key)) return;
    const auto v = kv_int(kv, key);
    if (v < 0) throw UsageError(std::string("key '") + key + "' must be non-negative");
    out = static_cast<std::size_t>(v);
  };
  size_of("model.n_layers", c.n_layers);
  size_of("model.d_model", c.d_model);
  size_of("model.d_ff", c.d_ff);
  size_of("model.n_heads", c.n_heads);
  size_of("model.vocab_size", c.vocab_size);
  size_of("model.max_seq_len", c.max_seq_len);
  if (kv.contains("model.strategy")) c.strategy = parse_positional_kind(kv.at("model.strategy"));
  if (kv.contains("model.causal")) c.causal = kv_bool(kv, "model.causal");
  if (kv.contains("model.dropout")) c.dropout = kv_double(kv, "model.dropout");
  if (kv.contains("model.seed")) {
    std::size_t s = 0;
    size_of("model.seed", s);
    c.seed = s;
  }
  return c;
}

std::size_t expected_param_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  const std::size_t per_layer = 4 * (d * d + d) + 2 * d * f + f + d + 4 * d;
  std::size_t total = c.n_layers * per_layer + 2 * d + c.vocab_size * d;
  if (c.strategy == PositionalKind::learned) total += c.max_seq_len * d;
  return total;
}

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, kInitStd);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> const_tensor(Shape shape, T fill) {
  return Tensor<T>::full(std::move(shape), fill, true);
}

}  // namespace

template <typename T>
TransformerLM<T>::TransformerLM(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.d_model, f = config_.d_ff;
  tok_emb_ = normal_tensor<T>({config_.vocab_size, d}, rng);
  positional_ = PositionalStrategy<T>::make(config_.strategy, config_.max_seq_len, d,
                                            config_.n_heads, rng());
  layers_.resize(config_.n_layers);
  for (auto& w : layers_) {
    w.ln1_gamma = const_tensor<T>({d}, T(1));
    w.ln1_beta = const_tensor<T>({d}, T(0));
    w.wq = normal_tensor<T>({d, d}, rng);
    w.bq = const_tensor<T>({d}, T(0));
    w.wk = normal_tensor<T>({d, d}, rng);
    w.bk = const_tensor<T>({d}, T(0));
    w.wv = normal_tensor<T>({d, d}, rng);
    w.bv = const_tensor<T>({d}, T(0));
    w.wo = normal_tensor<T>({d, d}, rng);
    w.bo = const_tensor<T>({d}, T(0));
    w.ln2_gamma = const_tensor<T>({d}, T(1));
    w.ln2_beta = const_tensor<T>({d}, T(0));
    w.w1 = normal_tensor<T>({d, f}, rng);
    w.b1 = const_tensor<T>({f}, T(0));
    w.w2 = normal_tensor<T>({f, d}, rng);
    w.b2 = const_tensor<T>({d}, T(0));
  }
  lnf_gamma_ = const_tensor<T>({d}, T(1));
  lnf_beta_ = const_tensor<T>({d}, T(0));
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const LayerWeights<T>& w, std::size_t heads,
                               const Tensor<T>& mask) {
  const std::size_t d = x.shape().back();
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(d / heads)));
  Tensor<T> q = split_heads(linear(x, w.wq, w.bq), heads);
  Tensor<T> k = split_heads(linear(x, w.wk, w.bk), heads);
  Tensor<T> v = split_heads(linear(x, w.wv, w.bv), heads);
  Tensor<T> scores = scale(batched_matmul(q, k, true), inv_sqrt);
  Tensor<T> probs = softmax_rows(scores, mask);
  Tensor<T> mixed = merge_heads(batched_matmul(probs, v, false));
  return linear(mixed, w.wo, w.bo);
}

template <typename T>
typename TransformerLM<T>::Output TransformerLM<T>::forward(std::span<const std::int32_t> tokens,
                                                            std::size_t batch, std::size_t length,
                                                            bool collect_hidden,
                                                            std::mt19937_64* dropout_rng) const {
  if (length > config_.max_seq_len) {
    throw LengthError("input length " + std::to_string(length) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  const double p = dropout_rng ? config_.dropout : 0.0;
  auto drop = [&](const Tensor<T>& t) { return p > 0.0 ? dropout(t, p, *dropout_rng) : t; };

  Output out;
  Tensor<T> h = embedding_gather(tok_emb_, tokens, {batch, length});
  h = drop(positional_.apply_input_positions(h));
  if (collect_hidden) out.hidden.push_back(h);
  const Tensor<T> mask = positional_.attention_mask(length, config_.causal);
  for (const auto& w : layers_) {
    Tensor<T> a = multi_head_attention(layer_norm(h, w.ln1_gamma, w.ln1_beta, T(kLayerNormEps)), w,
                                       config_.n_heads, mask);
    h = add(h, drop(a));
    Tensor<T> f = linear(layer_norm(h, w.ln2_gamma, w.ln2_beta, T(kLayerNormEps)), w.w1, w.b1);
    f = linear(activation(f, Activation::gelu), w.w2, w.b2);
    h = add(h, drop(f));
    if (collect_hidden) out.hidden.push_back(h);
  }
  h = layer_norm(h, lnf_gamma_, lnf_beta_, T(kLayerNormEps));
  out.logits = linear(h, tok_emb_, Tensor<T>{}, true);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> TransformerLM<T>::parameters() const {
  std::vector<NamedTensor<T>> p;
  p.push_back({"tok_emb", tok_emb_});
  if (positional_.kind() == PositionalKind::learned) p.push_back({"pos_table", positional_.table()});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& w = layers_[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    p.push_back({pre + "ln1.gamma", w.ln1_gamma});
    p.push_back({pre + "ln1.beta", w.ln1_beta});
    p.push_back({pre + "attn.wq", w.wq});
    p.push_back({pre + "attn.bq", w.bq});
    p.push_back({pre + "attn.wk", w.wk});
    p.push_back({pre + "attn.bk", w.bk});
    p.push_back({pre + "attn.wv", w.wv});
    p.push_back({pre + "attn.bv", w.bv});
    p.push_back({pre + "attn.wo", w.wo});
    p.push_back({pre + "attn.bo", w.bo});
    p.push_back({pre + "ln2.gamma", w.ln2_gamma});
    p.push_back({pre + "ln2.beta", w.ln2_beta});
    p.push_back({pre + "ffn.w1", w.w1});
    p.push_back({pre + "ffn.b1", w.b1});
    p.push_back({pre + "ffn.w2", w.w2});
    p.push_back({pre + "ffn.b2", w.b2});
  }
  p.push_back({"ln_f.gamma", lnf_gamma_});
  p.push_back({"ln_f.beta", lnf_beta_});
  return p;
}

template <typename T>
std::size_t TransformerLM<T>::count_params() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::string take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    const std::string s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(const TransformerLM<T>& model, const std::filesystem::path& path) {
  std::string buf(kCheckpointMagic, 4);
  put_u32(buf, kCheckpointVersion);
  const std::string cfg = format_key_values(model.config().to_key_values());
  put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  const auto params = model.parameters();
  put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(buf, static_cast<std::uint32_t>(e));
    for (T v : t.data()) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

template <typename T>
TransformerLM<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (r.take(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw FormatError(path.string() + " is not a poslab checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t cfg_len = r.u32("config length");
  ModelConfig config;
  try {
    config = ModelConfig::from_key_values(parse_key_values(r.take(cfg_len, "config"), "checkpoint"));
    config.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint config block is invalid: ") + e.what());
  }
  TransformerLM<T> model(config);
  auto params = model.parameters();
  const std::uint32_t count = r.u32("tensor count");
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const std::string stored = r.take(r.u32("name length"), "tensor name");
    if (stored != name) throw FormatError("expected tensor '" + name + "', found '" + stored + "'");
    const std::uint32_t rank = r.u32("rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.u32("extent");
    if (shape != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(t.shape()));
    }
    for (T& v : t.data()) v = static_cast<T>(r.f32("tensor payload"));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last tensor");
  return model;
}

template class TransformerLM<float>;
template class TransformerLM<double>;
template Tensor<float> multi_head_attention<float>(const Tensor<float>&, const LayerWeights<float>&,
                                                   std::size_t, const Tensor<float>&);
template Tensor<double> multi_head_attention<double>(const Tensor<double>&,
                                                     const LayerWeights<double>&, std::size_t,
                                                     const Tensor<double>&);
template void save_checkpoint<float>(const TransformerLM<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const TransformerLM<double>&, const std::filesystem::path&);
template TransformerLM<float> load_checkpoint<float>(const std::filesystem::path&);
template TransformerLM<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace poslab
