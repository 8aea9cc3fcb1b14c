// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "poslab/error.hpp"

namespace poslab {

TokenizerKind parse_tokenizer_kind(std::string_view name) {
  if (name == "byte") return TokenizerKind::byte;
  if (name == "word") return TokenizerKind::word;
  throw ConfigError("unknown tokenizer '" + std::string(name) + "' (expected byte or word)");
}

std::string_view tokenizer_name(TokenizerKind kind) {
  return kind == TokenizerKind::byte ? "byte" : "word";
}

std::vector<std::int32_t> tokenize_bytes(std::string_view text) {
  std::vector<std::int32_t> ids(text.size());
  std::transform(text.begin(), text.end(), ids.begin(),
                 [](char c) { return static_cast<std::int32_t>(static_cast<unsigned char>(c)); });
  return ids;
}

namespace {

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > begin) fn(text.substr(begin, i - begin));
  }
}

}  // namespace

WordVocab::WordVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

WordVocab WordVocab::build(std::string_view text, std::size_t top_k) {
  std::map<std::string, std::size_t, std::less<>> counts;
  for_each_word(text, [&](std::string_view w) {
    auto it = counts.find(w);
    if (it == counts.end()) {
      counts.emplace(std::string(w), 1);
    } else {
      ++it->second;
    }
  });
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_k) ranked.resize(top_k);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [w, n] : ranked) tokens.push_back(std::move(w));
  return WordVocab(std::move(tokens));
}

WordVocab WordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  return WordVocab(std::move(tokens));
}

void WordVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary file " + path.string());
}

const std::string& WordVocab::token(std::int32_t id) const {
  static const std::string unk = "<unk>";
  if (id == unk_id()) return unk;
  if (id < 0 || id > unk_id()) throw IndexError("word id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::int32_t WordVocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? unk_id() : it->second;
}

std::vector<std::int32_t> WordVocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for_each_word(text, [&](std::string_view w) { ids.push_back(id(w)); });
  return ids;
}

std::string WordVocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

Corpus Corpus::from_ids(std::vector<std::int32_t> ids, std::size_t vocab_size,
                        double valid_fraction) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must lie in (0, 1)");
  }
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab_size));
    }
  }
  Corpus c;
  const auto n = ids.size();
  const auto n_valid = static_cast<std::size_t>(std::ceil(valid_fraction * static_cast<double>(n)));
  c.split = n - std::min(n, n_valid);
  c.ids = std::move(ids);
  c.vocab_size = vocab_size;
  return c;
}

Corpus Corpus::from_text(std::string_view text, TokenizerKind kind, std::size_t top_k,
                         double valid_fraction) {
  if (kind == TokenizerKind::byte) {
    return from_ids(tokenize_bytes(text), kByteVocabSize, valid_fraction);
  }
  if (top_k == 0) throw ConfigError("word tokenizer needs a positive vocabulary size");
  WordVocab vocab = WordVocab::build(text, top_k);
  Corpus c = from_ids(vocab.encode(text), vocab.size(), valid_fraction);
  c.kind = TokenizerKind::word;
  c.vocab = std::move(vocab);
  return c;
}

Corpus load_corpus(const std::filesystem::path& path, TokenizerKind kind, std::size_t top_k,
                   double valid_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return Corpus::from_text(buf.str(), kind, top_k, valid_fraction);
}

std::vector<std::size_t> chunk_offsets(std::size_t stream_length, std::size_t length) {
  if (length == 0) throw ConfigError("sequence length must be positive");
  std::vector<std::size_t> offsets;
  for (std::size_t o = 0; o + length + 1 <= stream_length; o += length + 1) offsets.push_back(o);
  return offsets;
}

TokenBatch make_lm_batch(std::span<const std::int32_t> stream,
                         std::span<const std::size_t> offsets, std::size_t length) {
  TokenBatch b;
  b.batch = offsets.size();
  b.length = length;
  b.inputs.reserve(b.batch * length);
  b.targets.reserve(b.batch * length);
  for (std::size_t o : offsets) {
    if (o + length + 1 > stream.size()) throw IndexError("chunk runs past end of stream");
    b.inputs.insert(b.inputs.end(), stream.begin() + o, stream.begin() + o + length);
    b.targets.insert(b.targets.end(), stream.begin() + o + 1, stream.begin() + o + length + 1);
  }
  return b;
}

LmBatcher::LmBatcher(std::span<const std::int32_t> stream, std::size_t length,
                     std::size_t tokens_per_batch, std::uint64_t seed)
    : stream_(stream), length_(length), seed_(seed) {
  if (tokens_per_batch < length) {
    throw ConfigError("tokens_per_batch (" + std::to_string(tokens_per_batch) +
                      ") is smaller than the sequence length (" + std::to_string(length) + ")");
  }
  if (stream.size() < length + 1) {
    throw ConfigError("stream of " + std::to_string(stream.size()) +
                      " tokens is shorter than one chunk of " + std::to_string(length + 1));
  }
  offsets_ = chunk_offsets(stream.size(), length);
  batch_ = std::min(tokens_per_batch / length, offsets_.size());
  reshuffle();
}

void LmBatcher::reshuffle() {
  order_.resize(offsets_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch_)};
  std::mt19937_64 rng(seq);
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

TokenBatch LmBatcher::next() {
  if (cursor_ + batch_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::vector<std::size_t> picked(batch_);
  for (std::size_t i = 0; i < batch_; ++i) picked[i] = offsets_[order_[cursor_ + i]];
  cursor_ += batch_;
  return make_lm_batch(stream_, picked, length_);
}

TokenBatch mlm_corrupt(const TokenBatch& batch, double p, std::int32_t mask_id,
                       std::size_t base_vocab, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask probability must lie in [0, 1]");
  TokenBatch out;
  out.batch = batch.batch;
  out.length = batch.length;
  out.original = batch.inputs;
  out.inputs = batch.inputs;
  out.targets.assign(batch.inputs.size(), kIgnoreIndex);
  out.selected.assign(batch.inputs.size(), 0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::int32_t> random_id(0, static_cast<std::int32_t>(base_vocab) - 1);
  for (std::size_t i = 0; i < out.inputs.size(); ++i) {
    const double pick = u(rng), how = u(rng);
    const std::int32_t replacement = random_id(rng);
    if (pick >= p) continue;
    out.selected[i] = 1;
    out.targets[i] = batch.inputs[i];
    if (how < 0.8) {
      out.inputs[i] = mask_id;
    } else if (how < 0.9) {
      out.inputs[i] = replacement;
    }
  }
  return out;
}

}  // namespace poslab
