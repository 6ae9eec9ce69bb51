#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "squq/clustering.hpp"
#include "squq/error.hpp"

namespace squq {
namespace {

SquareMatrix constant_matrix(std::size_t n, double off) {
  SquareMatrix m(n, off);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SquareMatrix random_matrix(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SquareMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = i == j ? 1.0 : u(rng);
  return m;
}

GenerationRecord record_for(const SquareMatrix& m) {
  GenerationRecord rec;
  rec.query_id = "q";
  for (std::size_t i = 0; i < m.size(); ++i) rec.responses.push_back(Response{"r", {-1.0}, i, {}, {}, {}});
  rec.entailment_fwd = m;
  return rec;
}

TEST(PairwiseSimilarity, TakesMaxOfBothDirections) {
  SquareMatrix m = SquareMatrix::identity(2);
  m(0, 1) = 0.3;
  m(1, 0) = 0.8;
  EXPECT_EQ(pairwise_similarity(m, 0, 1), 0.8);
  EXPECT_EQ(pairwise_similarity(m, 1, 0), 0.8);
  EXPECT_EQ(pairwise_similarity(m, 1, 1), 1.0);
  EXPECT_EQ(pairwise_similarity(constant_matrix(2, 0.0), 0, 1), 0.0);
}

TEST(PairwiseSimilarity, OutOfRangeThrows) {
  try {
    pairwise_similarity(SquareMatrix::identity(2), 0, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(PairwiseSimilarity, IsSymmetric) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto m = random_matrix(rng, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(pairwise_similarity(m, i, j), pairwise_similarity(m, j, i));
  }
}

TEST(MembershipScore, AveragesOverMembers) {
  SquareMatrix m = SquareMatrix::identity(4);
  m(0, 3) = 0.8;
  m(1, 3) = 0.6;
  EXPECT_DOUBLE_EQ(membership_score(m, Cluster{0, {0, 1}}, 3), 0.7);

  SquareMatrix one = SquareMatrix::identity(2);
  one(1, 0) = 0.9;
  EXPECT_DOUBLE_EQ(membership_score(one, Cluster{0, {0}}, 1), 0.9);

  m(0, 3) = 0.1;
  m(1, 3) = 0.2;
  m(2, 3) = 0.9;
  EXPECT_NEAR(membership_score(m, Cluster{0, {0, 1, 2}}, 3), 0.4, 1e-15);
}

TEST(MembershipScore, EmptyClusterThrows) {
  try {
    membership_score(SquareMatrix::identity(2), Cluster{0, {}}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCluster);
  }
}

TEST(NewClusterScore, CrpPrior) {
  EXPECT_EQ(new_cluster_score(0.5, 0), 1.0);
  EXPECT_NEAR(new_cluster_score(0.5, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(new_cluster_score(0.5, 3), 0.14285714285714285, 1e-15);
  for (double bad : {0.0, -1.0}) {
    try {
      new_cluster_score(bad, 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonPositiveAlpha);
    }
  }
}

TEST(Assign, FirstResponseOpensClusterDeterministically) {
  const auto d = assign(SquareMatrix::identity(1), ClusterSet{}, 0, ClusteringConfig{0.5});
  EXPECT_TRUE(d.opens_new_cluster());
  EXPECT_EQ(d.scores, std::vector<double>{1.0});
  EXPECT_EQ(d.probabilities, std::vector<double>{1.0});
}

TEST(Assign, JoinsWhenSimilarityBeatsPrior) {
  ClusterSet partial{{Cluster{0, {0}}}, 1};
  SquareMatrix m = SquareMatrix::identity(2);
  m(0, 1) = 0.9;
  const auto d = assign(m, partial, 1, ClusteringConfig{0.5});
  ASSERT_EQ(d.scores.size(), 2u);
  EXPECT_DOUBLE_EQ(d.scores[0], 0.9);
  EXPECT_NEAR(d.scores[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(d.probabilities[0], 0.638, 1e-3);
  EXPECT_NEAR(d.probabilities[1], 0.362, 1e-3);
  EXPECT_EQ(d.cluster, std::optional<std::size_t>(0));
}

TEST(Assign, OpensClusterWhenPriorWins) {
  ClusterSet partial{{Cluster{0, {0}}}, 1};
  SquareMatrix m = SquareMatrix::identity(2);
  m(0, 1) = 0.1;
  EXPECT_TRUE(assign(m, partial, 1, ClusteringConfig{0.5}).opens_new_cluster());
}

TEST(Assign, ExactTieWithPriorJoinsExistingCluster) {
  ClusterSet partial{{Cluster{0, {0}}}, 1};
  SquareMatrix m = SquareMatrix::identity(2);
  m(0, 1) = 0.5;  // alpha/(alpha+1) with alpha = 1
  const auto d = assign(m, partial, 1, ClusteringConfig{1.0});
  EXPECT_EQ(d.scores[0], d.scores[1]);
  EXPECT_EQ(d.cluster, std::optional<std::size_t>(0));
}

TEST(ClusterRecord, SingleResponse) {
  const auto cs = cluster_record(record_for(SquareMatrix::identity(1)), ClusteringConfig{});
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs.clusters[0].members, std::vector<std::size_t>{0});
}

TEST(ClusterRecord, AllEquivalentFormOneCluster) {
  const auto cs = cluster_record(record_for(constant_matrix(3, 1.0)), ClusteringConfig{0.5});
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs.clusters[0].members, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ClusterRecord, AllDissimilarFormSingletons) {
  const auto cs = cluster_record(record_for(constant_matrix(3, 0.0)), ClusteringConfig{0.5});
  ASSERT_EQ(cs.size(), 3u);
  EXPECT_EQ(cs.assignments(), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ClusterRecord, ShapeMismatchThrows) {
  auto rec = record_for(SquareMatrix::identity(3));
  rec.entailment_fwd = SquareMatrix::identity(2);
  try {
    cluster_record(rec, ClusteringConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MatrixShapeMismatch);
  }
}

TEST(ClusterRecord, OneDirectionalEntailmentIsEnough) {
  // "Paris" vs a long answer that entails it but not the reverse.
  SquareMatrix m = SquareMatrix::identity(2);
  m(1, 0) = 0.95;
  m(0, 1) = 0.05;
  EXPECT_EQ(cluster_record(record_for(m), ClusteringConfig{}).size(), 1u);
}

TEST(ClusterRecord, PartitionsEveryIndexExactlyOnce) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng() % 50;
    const auto cs = cluster_record(record_for(random_matrix(rng, n)), ClusteringConfig{0.5});
    ASSERT_GE(cs.size(), 1u);
    ASSERT_LE(cs.size(), n);
    std::vector<int> seen(n, 0);
    for (const auto& c : cs.clusters) {
      ASSERT_FALSE(c.members.empty());
      for (std::size_t m : c.members) seen.at(m) += 1;
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST(ClusterRecord, DeterministicAndMatchesOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> alpha(0.05, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 20;
    const auto m = random_matrix(rng, n);
    const double a = alpha(rng);
    const auto cs = cluster_responses(m, ClusteringConfig{a});
    EXPECT_EQ(cs, cluster_responses(m, ClusteringConfig{a}));
    EXPECT_EQ(cs.assignments(), testing::oracle_cluster(m.rows(), a)) << "instance " << t;
  }
}

TEST(Assign, SoftmaxArgmaxAgreesWithRawArgmax) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 20;
    const auto m = random_matrix(rng, n);
    ClusterSet cs;
    for (std::size_t j = 0; j < n; ++j) {
      const auto d = assign(m, cs, j, ClusteringConfig{0.5});
      EXPECT_EQ(argmax(d.probabilities), argmax(d.scores));
      EXPECT_EQ(d.chosen_option(), argmax(d.scores));
      apply(cs, j, d);
    }
  }
}

TEST(Assign, LargerAlphaKeepsNewClusterDecisions) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 15;
    const auto m = random_matrix(rng, n);
    const double a = u(rng);
    const double bigger = a + u(rng);
    ClusterSet cs;
    for (std::size_t j = 0; j < n; ++j) {
      const auto d = assign(m, cs, j, ClusteringConfig{a});
      if (d.opens_new_cluster()) EXPECT_TRUE(assign(m, cs, j, ClusteringConfig{bigger}).opens_new_cluster());
      apply(cs, j, d);
    }
  }
}

}  // namespace
}  // namespace squq
