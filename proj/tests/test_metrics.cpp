#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "adareg/error.hpp"
#include "adareg/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace adareg {
namespace {

using Labels = std::vector<std::uint8_t>;
using Scores = std::vector<double>;

TEST(Auc, HandCases) {
  EXPECT_EQ(auc(Scores{0.9, 0.1}, Labels{1, 0}), 1.0);
  EXPECT_EQ(auc(Scores{0.1, 0.9}, Labels{1, 0}), 0.0);
  EXPECT_EQ(auc(Scores{0.3, 0.3, 0.7}, Labels{0, 1, 1}), 0.75);
  EXPECT_EQ(auc(Scores{1, 1, 1, 1}, Labels{0, 1, 0, 1}), 0.5);
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(Scores{0.1, 0.2}, Labels{1, 1}), ValidationError);
  EXPECT_THROW(auc(Scores{0.1}, Labels{1, 0}), ValidationError);
  EXPECT_THROW(auc(Scores{0.1, std::nan("")}, Labels{1, 0}), ValidationError);
}

TEST(AucProperty, MatchesBruteForceAndInvariances) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t n = 2 + rng.below(199);
    Scores s(n);
    Labels y(n);
    // Coarse scores force plenty of ties.
    const std::uint64_t levels = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / 7.0;
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    y[0] = 1;
    y[1] = 0;
    const double a = auc(s, y);
    ASSERT_EQ(a, oracle::brute_auc(s, y)) << "seed " << seed;
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
    Scores t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 5.0;
    ASSERT_EQ(auc(t, y), a);
    Labels flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    ASSERT_NEAR(auc(s, flipped), 1.0 - a, 1e-15);
  }
}

TEST(Logloss, MatchesBce) {
  EXPECT_NEAR(logloss(Scores{0.0, 0.0}, Labels{1, 0}), std::log(2.0), 1e-15);
  EXPECT_THROW(logloss(Scores{}, Labels{}), ValidationError);
}

TEST(Norms, HandCases) {
  std::vector<EmbeddingTable> tables{EmbeddingTable(2, 2)};
  auto z = embedding_norms(tables);
  EXPECT_EQ(z.l2_sum, 0.0);
  EXPECT_EQ(z.sq_sum, 0.0);
  tables[0].values = {3, 4, 0, 0};
  auto n = embedding_norms(tables);
  EXPECT_DOUBLE_EQ(n.l2_sum, 5.0);
  EXPECT_DOUBLE_EQ(n.sq_sum, 25.0);
  EXPECT_EQ(n.sq_per_feature, std::vector<double>{25.0});
}

TEST(NormsProperty, Homogeneity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitMix64 rng(seed);
    std::vector<EmbeddingTable> tables{EmbeddingTable(1 + rng.below(9), 1 + rng.below(4)),
                                       EmbeddingTable(1 + rng.below(9), 1 + rng.below(4))};
    for (auto& t : tables)
      for (auto& v : t.values) v = rng.uniform() - 0.5;
    const auto a = embedding_norms(tables);
    for (auto& t : tables)
      for (auto& v : t.values) v *= 2.0;
    const auto b = embedding_norms(tables);
    EXPECT_NEAR(b.l2_sum, 2.0 * a.l2_sum, 1e-12);
    EXPECT_NEAR(b.sq_sum, 4.0 * a.sq_sum, 1e-12);
    EXPECT_NEAR(a.sq_per_feature[0] + a.sq_per_feature[1], a.sq_sum, 1e-12);
    EXPECT_GE(a.l2_sum, 0.0);
  }
}

TEST(Intervals, HandCase) {
  const std::vector<std::uint64_t> steps{1, 3, 7};
  EXPECT_EQ(mean_interval(steps), 4.0 / 3.0);
  const std::vector<std::uint64_t> bad{3, 3};
  EXPECT_THROW(mean_interval(bad), ValidationError);
}

TEST(FeatureStats, HandStream) {
  // B = 1, ID 5 of feature 0 at steps 1, 3, 7; feature 1 has cardinality 1.
  Dataset ds;
  ds.labels.assign(7, 0);
  ds.columns = {{5, 0, 5, 1, 2, 3, 5}, std::vector<FeatureId>(7, 0)};
  ds.feature_cards = {6, 1};
  const auto stats = feature_stats(ds, 1);
  ASSERT_EQ(stats.size(), 2u);
  EXPECT_EQ(stats[1].mean_update_interval, 0.0);
  EXPECT_EQ(stats[1].unique_ids, 1u);
  EXPECT_EQ(stats[1].mean_occurrences, 7.0);
  // Feature 0 intervals: ID5 -> 0,1,3; ID0 -> 1; ID1 -> 3; ID2 -> 4; ID3 -> 5.
  EXPECT_DOUBLE_EQ(stats[0].mean_update_interval, (0 + 1 + 3 + 1 + 3 + 4 + 5) / 7.0);
  EXPECT_EQ(stats[0].unique_ids, 5u);
}

TEST(FeatureStats, DuplicatesInBatchCountOnce) {
  Dataset ds;
  ds.labels.assign(4, 0);
  ds.columns = {{2, 2, 2, 2}};
  ds.feature_cards = {3};
  const auto stats = feature_stats(ds, 2);  // ID 2 touched at steps 1 and 2
  EXPECT_EQ(stats[0].mean_update_interval, 0.0);
  EXPECT_EQ(stats[0].mean_occurrences, 4.0);
  EXPECT_THROW(feature_stats(Dataset{}, 2), ValidationError);
  EXPECT_THROW(feature_stats(ds, 0), ValidationError);
}

TEST(FeatureStatsProperty, EveryBatchFeatureHasZeroInterval) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SplitMix64 rng(seed);
    const std::size_t b = 1 + rng.below(16);
    Dataset ds = test::random_dataset(seed, b * (1 + rng.below(20)), {50});
    ds.columns.push_back(std::vector<FeatureId>(ds.num_samples(), 0));
    ds.feature_cards.push_back(1);
    const auto stats = feature_stats(ds, b);
    EXPECT_EQ(stats[1].mean_update_interval, 0.0);
    EXPECT_GE(stats[0].mean_update_interval, 0.0);
    EXPECT_LE(stats[0].unique_ids, 50u);
  }
}

TEST(FeatureStats, CsvHeader) {
  std::ostringstream out;
  write_feature_stats_csv({{0, 3, 2.5, 1.25}}, out);
  EXPECT_EQ(out.str(),
            "feature_index,unique_ids,mean_occurrences,mean_update_interval\n0,3,2.5,1.25\n");
}

BoundInputs ones() {
  BoundInputs in;
  in.frobenius_norms = {1.0};
  in.sum_tau = 1.0;
  in.num_features = 1;
  in.num_samples = 1;
  in.num_layers = 1;
  return in;
}

TEST(Bound, HandCases) {
  const double hand = std::sqrt(2.0 * std::numbers::ln2) + 1.0;
  EXPECT_NEAR(rademacher_bound(ones()), hand, 1e-9);
  EXPECT_NEAR(rademacher_bound(ones()), 2.17741, 1e-5);
  auto in = ones();
  in.sum_tau = 0.0;
  EXPECT_EQ(rademacher_bound(in), 0.0);
  in = ones();
  in.sum_tau = 2.0;
  EXPECT_NEAR(rademacher_bound(in), std::sqrt(2.0) * hand, 1e-12);
}

TEST(Bound, Errors) {
  auto in = ones();
  in.num_samples = 0;
  EXPECT_THROW(rademacher_bound(in), ValidationError);
  in = ones();
  in.num_features = 0;
  EXPECT_THROW(rademacher_bound(in), ValidationError);
  in = ones();
  in.num_layers = 0;
  EXPECT_THROW(rademacher_bound(in), ValidationError);
  in = ones();
  in.num_layers = 2;
  EXPECT_THROW(rademacher_bound(in), ValidationError);
}

TEST(BoundProperty, Monotonicity) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    SplitMix64 rng(seed);
    BoundInputs in;
    in.num_layers = 1 + rng.below(4);
    for (std::size_t l = 0; l < in.num_layers; ++l) in.frobenius_norms.push_back(0.1 + 3 * rng.uniform());
    in.sum_tau = 0.01 + 100 * rng.uniform();
    in.num_features = 1 + rng.below(30);
    in.num_samples = 1 + rng.below(1000000);
    const double base = rademacher_bound(in);
    auto bumped = in;
    bumped.sum_tau *= 1.5;
    EXPECT_GT(rademacher_bound(bumped), base);
    bumped = in;
    bumped.frobenius_norms[rng.below(in.num_layers)] *= 1.1;
    EXPECT_GT(rademacher_bound(bumped), base);
    bumped = in;
    bumped.num_features += 1;
    EXPECT_GT(rademacher_bound(bumped), base);
    bumped = in;
    bumped.num_samples += 1 + rng.below(100);
    EXPECT_LT(rademacher_bound(bumped), base);
  }
}

TEST(Bound, InputsFromModelShareNormSource) {
  auto p = oracle::tiny_problem(9, false);
  const auto in = bound_inputs(p.model, 1000);
  EXPECT_EQ(in.sum_tau, embedding_norms(p.model.tables).sq_sum);
  EXPECT_EQ(in.num_features, 2u);
  EXPECT_EQ(in.num_layers, 2u);
  EXPECT_EQ(in.frobenius_norms[0], frobenius_norm(p.model.mlp.weights[0]));
  Matrix m(1, 2);
  m.data = {3, 4};
  EXPECT_DOUBLE_EQ(frobenius_norm(m), 5.0);
}

TEST(Records, JsonlKeyOrderAndCsv) {
  EvalRecord r{2, 40, "test", 0.75, 0.5, 1.5, 2.25};
  EXPECT_EQ(to_jsonl(r),
            R"({"epoch":2,"step":40,"split":"test","auc":0.75,"logloss":0.5,"emb_l2_sum":1.5,"emb_sq_sum":2.25})");
  EXPECT_EQ(to_csv_row(r), "2,40,test,0.75,0.5,1.5,2.25");
}

}  // namespace
}  // namespace adareg
