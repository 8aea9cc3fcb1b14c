// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus loading, tokenization and batching for the causal and masked
// objectives.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace poslab {

enum class TokenizerKind { byte, word };

TokenizerKind parse_tokenizer_kind(std::string_view name);
std::string_view tokenizer_name(TokenizerKind kind);

inline constexpr std::size_t kByteVocabSize = 256;
inline constexpr double kValidFraction = 0.05;
inline constexpr std::int32_t kIgnoreIndex = -100;
inline constexpr double kMlmProbability = 0.15;

std::vector<std::int32_t> tokenize_bytes(std::string_view text);

/// Word vocabulary: the K most frequent whitespace-separated tokens ranked by
/// descending count (ties broken by byte order), followed by one UNK id.
class WordVocab {
 public:
  WordVocab() = default;
  explicit WordVocab(std::vector<std::string> tokens);

  static WordVocab build(std::string_view text, std::size_t top_k);
  /// One token per line, rank = line number.
  static WordVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size() + 1; }
  std::int32_t unk_id() const { return static_cast<std::int32_t>(tokens_.size()); }
  const std::string& token(std::int32_t id) const;
  std::int32_t id(std::string_view word) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct Corpus {
  std::vector<std::int32_t> ids;
  std::size_t vocab_size = kByteVocabSize;
  TokenizerKind kind = TokenizerKind::byte;
  std::size_t split = 0;  // first validation token
  WordVocab vocab;        // populated for word tokenization

  /// Validation is the contiguous final `valid_fraction` of the tokens.
  static Corpus from_ids(std::vector<std::int32_t> ids, std::size_t vocab_size,
                         double valid_fraction = kValidFraction);
  static Corpus from_text(std::string_view text, TokenizerKind kind, std::size_t top_k = 0,
                          double valid_fraction = kValidFraction);

  std::span<const std::int32_t> train() const { return {ids.data(), split}; }
  std::span<const std::int32_t> valid() const {
    return {ids.data() + split, ids.size() - split};
  }
};

/// Reads a UTF-8 file and tokenizes it. Throws IoError if unreadable.
Corpus load_corpus(const std::filesystem::path& path, TokenizerKind kind, std::size_t top_k = 0,
                   double valid_fraction = kValidFraction);

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> inputs;   // batch * length
  std::vector<std::int32_t> targets;  // batch * length, kIgnoreIndex where unscored
  std::vector<std::uint8_t> selected; // MLM only: corrupted positions
  std::vector<std::int32_t> original; // MLM only: uncorrupted inputs
};

/// Start offsets of the non-overlapping (L+1)-token chunks of a stream.
std::vector<std::size_t> chunk_offsets(std::size_t stream_length, std::size_t length);

/// Causal batch from the given chunks: inputs chunk[0..L), targets chunk[1..L+1).
TokenBatch make_lm_batch(std::span<const std::int32_t> stream,
                         std::span<const std::size_t> offsets, std::size_t length);

/// Endless iterator over shuffled causal batches. Each epoch reshuffles the
/// chunk order from (seed, epoch); B = tokens_per_batch / L chunks per batch
/// and chunks that do not fill a whole batch at the end of an epoch are
/// skipped.
class LmBatcher {
 public:
  LmBatcher(std::span<const std::int32_t> stream, std::size_t length,
            std::size_t tokens_per_batch, std::uint64_t seed);

  TokenBatch next();

  std::size_t batch_size() const { return batch_; }
  std::size_t chunk_count() const { return offsets_.size(); }
  std::size_t batches_per_epoch() const { return offsets_.size() / batch_; }
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::span<const std::int32_t> stream_;
  std::size_t length_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Masked-LM corruption of batch.inputs. Each position is selected with
/// probability p; selected positions become mask_id (80%), a uniform id in
/// [0, base_vocab) (10%) or stay unchanged (10%). Targets hold the original id
/// at selected positions and kIgnoreIndex elsewhere.
TokenBatch mlm_corrupt(const TokenBatch& batch, double p, std::int32_t mask_id,
                       std::size_t base_vocab, std::uint64_t seed);

}  // namespace poslab
