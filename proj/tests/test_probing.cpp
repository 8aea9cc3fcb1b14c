// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "poslab/probing.hpp"
#include "test_util.hpp"

namespace poslab {
namespace {

double brute_force_mad(std::size_t L) {
  std::int64_t total = 0;
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t p = 0; p < L; ++p) total += t > p ? t - p : p - t;
  }
  return static_cast<double>(total) / static_cast<double>(L * L);
}

TEST(RandomBaseline, MatchesBruteForceExactly) {
  for (std::size_t L : {1, 2, 16, 128, 1024}) EXPECT_EQ(random_baseline_mad(L), brute_force_mad(L)) << L;
  EXPECT_EQ(random_baseline_mad(1), 0.0);
  EXPECT_EQ(random_baseline_mad(2), 0.5);
  EXPECT_NEAR(random_baseline_mad(1024), 341.3330078125, 1e-12);
}

TEST(RandomBaseline, BoundedByAThirdOfLengthPlusOne) {
  for (std::size_t L = 1; L <= 3000; ++L) {
    EXPECT_LT(random_baseline_mad(L), static_cast<double>(L) / 3.0 + 1.0);
    EXPECT_LE(random_baseline_mad(L), static_cast<double>(L - 1));
  }
}

TEST(Mad, OracleAndConstantPredictors) {
  const std::int32_t L = 64;
  std::vector<std::pair<std::int32_t, std::int32_t>> oracle, constant;
  for (std::int32_t u = 0; u < L; ++u) {
    oracle.emplace_back(u, u);
    constant.emplace_back(u, L / 2);
  }
  EXPECT_EQ(mean_absolute_distance(oracle), 0.0);
  EXPECT_EQ(mean_absolute_distance(constant), L / 4.0);
}

ModelConfig probe_model(PositionalKind kind) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.n_heads = 4;
  c.vocab_size = 256;
  c.max_seq_len = 32;
  c.strategy = kind;
  c.seed = 9;
  return c;
}

std::vector<std::int32_t> text_stream(std::size_t n, std::uint64_t seed) {
  // skewed unigram stream so tokens repeat across positions
  std::mt19937_64 rng(seed);
  std::geometric_distribution<int> g(0.15);
  std::vector<std::int32_t> ids(n);
  for (auto& x : ids) x = std::min(g(rng), 255);
  return ids;
}

TEST(Collect, SizesAndLayerRange) {
  const TransformerLM<float> m(probe_model(PositionalKind::nopos));
  const auto stream = text_stream(33 * 10 + 7, 1);
  const ProbeDataset ds = collect_states(m, stream, 32, 1);
  EXPECT_EQ(ds.chunks, 10u);
  EXPECT_EQ(ds.size(), 10u * 32u);
  EXPECT_EQ(ds.features.size(), ds.size() * 32u);
  std::vector<std::size_t> per_label(32, 0);
  for (auto l : ds.labels) ++per_label[static_cast<std::size_t>(l)];
  for (auto n : per_label) EXPECT_EQ(n, 10u);
  EXPECT_THROW(collect_states(m, stream, 32, 3), ConfigError);
  EXPECT_EQ(collect_all_states(m, stream, 32).size(), 3u);
}

TEST(Collect, NoPosInputLayerCarriesNoPosition) {
  const TransformerLM<float> m(probe_model(PositionalKind::nopos));
  const auto stream = text_stream(33 * 4, 2);
  const ProbeDataset ds = collect_states(m, stream, 32, 0);
  std::size_t compared = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      const std::size_t ti = (i / 32) * 33 + i % 32, tj = (j / 32) * 33 + j % 32;
      if (stream[ti] != stream[tj] || ds.labels[i] == ds.labels[j]) continue;
      ++compared;
      ASSERT_TRUE(std::equal(ds.features.begin() + i * 32, ds.features.begin() + (i + 1) * 32,
                             ds.features.begin() + j * 32));
    }
  }
  EXPECT_GT(compared, 100u);
}

TEST(Collect, SinusoidalInputLayerSeparatesPositions) {
  const TransformerLM<float> m(probe_model(PositionalKind::sinusoidal));
  const std::vector<std::int32_t> stream(33 * 2, 42);
  const ProbeDataset ds = collect_states(m, stream, 32, 0);
  for (std::size_t i = 1; i < 32; ++i) {
    EXPECT_FALSE(std::equal(ds.features.begin(), ds.features.begin() + 32,
                            ds.features.begin() + i * 32));
  }
}

TEST(Split, ByChunkDisjointAndCovering) {
  const ProbeSplit s = split_chunks(50, 0.9, 3);
  EXPECT_EQ(s.train.size(), 45u);
  EXPECT_EQ(s.eval.size(), 5u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto c : s.eval) EXPECT_TRUE(all.insert(c).second);
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(split_chunks(2, 0.9, 0).eval.size(), 1u);
}

ProbeConfig quick_probe() {
  ProbeConfig pc;
  pc.steps = 400;
  pc.batch = 128;
  pc.seed = 4;
  return pc;
}

TEST(TrainProbe, SameSeedIdenticalParameters) {
  const TransformerLM<float> m(probe_model(PositionalKind::learned));
  const ProbeDataset ds = collect_states(m, text_stream(33 * 20, 5), 32, 1);
  ProbeConfig pc = quick_probe();
  pc.steps = 50;
  const Probe a = train_probe(ds, pc), b = train_probe(ds, pc);
  for (const auto& [x, y] : {std::pair{a.w1, b.w1}, {a.b1, b.b1}, {a.w2, b.w2}, {a.b2, b.b2}}) {
    EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }
  EXPECT_EQ(a.w1.shape(), (Shape{32, 64}));
  EXPECT_EQ(a.w2.shape(), (Shape{64, 32}));
}

TEST(TrainProbe, SinusoidalInputLayerIsDecodable) {
  const TransformerLM<float> m(probe_model(PositionalKind::sinusoidal));
  const ProbeDataset ds = collect_states(m, text_stream(33 * 60, 6), 32, 0);
  const ProbeConfig pc = quick_probe();
  const Probe p = train_probe(ds, pc);
  const ProbeSplit split = split_chunks(ds.chunks, pc.train_fraction, pc.seed);
  const ProbeResult r = probe_mad(p, ds, split.eval);
  EXPECT_LT(r.mad, 0.1 * random_baseline_mad(32));
  EXPECT_EQ(r.predictions.size(), split.eval.size() * 32);
}

TEST(TrainProbe, FreshNoPosInputLayerIsNearRandomBaseline) {
  const TransformerLM<float> m(probe_model(PositionalKind::nopos));
  // flat unigram distribution: each token type gets one position-free guess
  std::mt19937_64 rng(7);
  const auto stream = testing::random_ids(33 * 200, 64, rng);
  const auto results = probe_all_layers(m, stream, 32, quick_probe());
  ASSERT_EQ(results.size(), 3u);
  const double base = random_baseline_mad(32);
  EXPECT_NEAR(results[0].mad / base, 1.0, 0.1);
  for (const auto& r : results) {
    EXPECT_GE(r.mad, 0.0);
    EXPECT_LE(r.mad, 31.0);
  }
}

TEST(ProbeMad, ClassCountMustMatch) {
  const TransformerLM<float> m(probe_model(PositionalKind::nopos));
  const ProbeDataset ds = collect_states(m, text_stream(33 * 4, 8), 32, 0);
  ProbeConfig pc = quick_probe();
  pc.steps = 1;
  Probe p = train_probe(ds, pc);
  ProbeDataset shorter = collect_states(m, text_stream(17 * 4, 8), 16, 0);
  EXPECT_THROW(probe_mad(p, shorter), DimensionError);
}

TEST(Probing, NeverModifiesTheCheckpoint) {
  testing::TempDir dir("probe");
  const TransformerLM<float> m(probe_model(PositionalKind::learned));
  save_checkpoint(m, dir / "m.plab");
  auto slurp = [&] {
    std::ifstream in(dir / "m.plab", std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  const std::string before = slurp();
  const TransformerLM<float> loaded = load_checkpoint<float>(dir / "m.plab");
  ProbeConfig pc = quick_probe();
  pc.steps = 20;
  probe_all_layers(loaded, text_stream(33 * 10, 9), 32, pc);
  save_checkpoint(loaded, dir / "m.plab");
  EXPECT_EQ(slurp(), before);
}

TEST(ProbeCsv, CurveAndScatter) {
  std::vector<ProbeResult> rs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rs[i].layer = i;
    rs[i].mad = 1.5 * static_cast<double>(i);
    rs[i].predictions = {{0, 1}, {2, 2}};
  }
  const std::string curve = format_probe_curve_csv(rs, 2);
  EXPECT_EQ(curve, "layer,mad,accuracy,random_baseline\n0,0,0,0.5\n1,1.5,0,0.5\n2,3,0,0.5\n");
  EXPECT_EQ(format_probe_scatter_csv(rs[0]), "true_pos,predicted_pos\n0,1\n2,2\n");
}

}  // namespace
}  // namespace poslab
