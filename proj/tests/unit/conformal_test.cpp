#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "squq/conformal.hpp"
#include "squq/error.hpp"

namespace squq {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ClusterMass mass_of(double p, std::size_t id = 0) {
  return ClusterMass{id, p == 0.0 ? LogProb::zero_probability() : LogProb(std::log(p)), LogProb{}};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected squq::Error";
  return ErrorCode::InvalidConfig;
}

/// Record whose response i has sequence probability probs[i] and label labels[i].
GenerationRecord labelled(const std::vector<double>& probs, const std::vector<bool>& labels, double off = 0.0) {
  GenerationRecord rec;
  rec.query_id = "q";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double lp = probs[i] == 0.0 ? -kInf : std::log(probs[i]);
    rec.responses.push_back(Response{"answer " + std::to_string(i), {lp}, i, labels[i], {}, {}});
  }
  rec.entailment_fwd = SquareMatrix(probs.size(), off);
  for (std::size_t i = 0; i < probs.size(); ++i) rec.entailment_fwd(i, i) = 1.0;
  return rec;
}

TEST(Nonconformity, NegativeLogMass) {
  EXPECT_NEAR(nonconformity(mass_of(0.5)), std::log(2.0), 1e-15);
  EXPECT_EQ(nonconformity(mass_of(1.0)), 0.0);
  EXPECT_EQ(nonconformity(mass_of(0.0)), kInf);
}

TEST(Nonconformity, AddingAResponseStrictlyLowersScore) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lp(-5.0, 0.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> member_lps(1 + rng() % 10);
    for (double& v : member_lps) v = lp(rng) * static_cast<double>(1 + rng() % 4);
    const double before = -log_sum_exp(std::span<const double>(member_lps));
    member_lps.push_back(lp(rng) * static_cast<double>(1 + rng() % 4));
    const double after = -log_sum_exp(std::span<const double>(member_lps));
    EXPECT_LT(after, before);
  }
}

TEST(FilterCalibrationClusters, KeepsOnlyAllCorrectClusters) {
  const auto rec = labelled({0.2, 0.2, 0.1, 0.1}, {true, true, true, false});
  const ClusterSet cs{{Cluster{0, {0, 1}}, Cluster{1, {2, 3}}}, 4};
  const auto kept = filter_calibration_clusters(rec, cs);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].id, 0u);

  const auto none = labelled({0.2, 0.2}, {false, false});
  EXPECT_TRUE(filter_calibration_clusters(none, ClusterSet{{Cluster{0, {0, 1}}}, 2}).empty());
}

TEST(FilterCalibrationClusters, MissingLabelsThrows) {
  auto rec = labelled({0.2}, {true});
  rec.responses[0].correct.reset();
  EXPECT_EQ(code_of([&] { filter_calibration_clusters(rec, ClusterSet{{Cluster{0, {0}}}, 1}); }),
            ErrorCode::MissingLabels);
}

TEST(QuantileRank, FiniteSampleRank) {
  EXPECT_EQ(quantile_rank(9, 0.2), std::optional<std::size_t>(8));
  EXPECT_EQ(quantile_rank(9, 0.05), std::nullopt);
  EXPECT_EQ(quantile_rank(19, 0.5), std::optional<std::size_t>(10));
  EXPECT_EQ(quantile_rank(0, 0.5), std::nullopt);
  EXPECT_EQ(quantile_rank(99, 0.1), std::optional<std::size_t>(90));
  for (double bad : {0.0, 1.0, -0.1, 1.2}) {
    EXPECT_EQ(code_of([&] { quantile_rank(9, bad); }), ErrorCode::EpsilonOutOfRange);
  }
}

TEST(QuantileRank, MatchesIntegerArithmeticForDecimalEpsilons) {
  // eps = k/100 gives rank ceil((n+1)(100-k)/100), computed exactly in integers.
  for (std::size_t n = 1; n <= 300; ++n) {
    for (int k = 1; k < 100; ++k) {
      const std::size_t num = (n + 1) * static_cast<std::size_t>(100 - k);
      const std::size_t exact = (num + 99) / 100;
      const auto q = quantile_rank(n, k / 100.0);
      if (exact > n) EXPECT_EQ(q, std::nullopt) << n << " " << k;
      else EXPECT_EQ(q, std::optional<std::size_t>(exact)) << n << " " << k;
    }
  }
}

TEST(Calibrate, Examples) {
  const std::vector<double> scores{5, 3, 9, 1, 7, 2, 8, 4, 6};
  const auto m = CalibrationModel::calibrate(scores, 0.2);
  EXPECT_EQ(m.threshold(), 8.0);
  EXPECT_TRUE(std::is_sorted(m.scores().begin(), m.scores().end()));
  EXPECT_EQ(CalibrationModel::calibrate(scores, 0.05).threshold(), kInf);
  EXPECT_EQ(CalibrationModel::calibrate({}, 0.3).threshold(), kInf);
  EXPECT_EQ(code_of([] { CalibrationModel::calibrate({1.0}, 1.2); }), ErrorCode::EpsilonOutOfRange);
}

TEST(Calibrate, ThresholdNonIncreasingInEpsilon) {
  std::mt19937_64 rng(41);
  std::exponential_distribution<double> d(1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> scores(1 + rng() % 200);
    for (double& s : scores) s = d(rng);
    double prev = kInf;
    for (int k = 1; k < 100; ++k) {
      const double tau = CalibrationModel::calibrate(scores, k / 100.0).threshold();
      EXPECT_LE(tau, prev);
      prev = tau;
    }
  }
}

TEST(Calibrate, RestoreChecksConsistency) {
  const auto m = CalibrationModel::restore(0.2, 9, 8.0, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(m.threshold(), 8.0);
  EXPECT_EQ(code_of([] { CalibrationModel::restore(0.2, 9, 7.0, {1, 2, 3, 4, 5, 6, 7, 8, 9}); }),
            ErrorCode::SchemaError);
  const auto bare = CalibrationModel::restore(0.2, 9, 8.0, {});
  EXPECT_EQ(bare.threshold(), 8.0);
  EXPECT_TRUE(bare.scores().empty());
}

TEST(PredictSet, KeepsClustersAtOrBelowThreshold) {
  auto rec = labelled({std::exp(-7.5), std::exp(-8.5), std::exp(-7.5)}, {true, false, true});
  const ClusterSet cs{{Cluster{0, {0, 2}}, Cluster{1, {1}}}, 3};
  std::vector<ClusterMass> masses{ClusterMass{0, LogProb(-7.5), {}}, ClusterMass{1, LogProb(-8.5), {}}};
  const auto model = CalibrationModel::restore(0.2, 9, 8.0, {});
  const auto set = predict_set(rec, cs, masses, model);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.entries[0].cluster_id, 0u);
  EXPECT_EQ(set.entries[0].response_index, 0u);
  EXPECT_EQ(set.entries[0].text, "answer 0");
  EXPECT_EQ(set.entries[0].score, 7.5);
  EXPECT_EQ(set.tau, 8.0);

  // Ties at the threshold are admitted.
  masses[1].log_mass = LogProb(-8.0);
  EXPECT_EQ(predict_set(rec, cs, masses, model).size(), 2u);
}

TEST(PredictSet, InfiniteThresholdAdmitsEveryCluster) {
  const auto rec = labelled({0.1, 0.0, 0.3}, {true, false, false});
  const auto cs = cluster_record(rec, ClusteringConfig{});
  const auto masses = cluster_log_mass(rec, cs, Variant::unnormalized);
  const auto set = predict_set(rec, cs, masses, CalibrationModel::calibrate({}, 0.1));
  EXPECT_EQ(set.size(), cs.size());
}

TEST(PredictSet, ZeroMassClustersNeverQualifyUnderFiniteThreshold) {
  const auto rec = labelled({0.0, 0.0}, {true, true});
  const auto cs = cluster_record(rec, ClusteringConfig{});
  const auto masses = cluster_log_mass(rec, cs, Variant::unnormalized);
  EXPECT_EQ(predict_set(rec, cs, masses, CalibrationModel::calibrate({1e300}, 0.5)).size(), 0u);
}

TEST(PredictSet, RepresentativeIsFirstMemberAndClustersDistinct) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0), p(0.001, 0.2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<double> probs(n);
    std::vector<bool> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = p(rng);
      labels[i] = u(rng) < 0.5;
    }
    auto rec = labelled(probs, labels);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) rec.entailment_fwd(i, j) = u(rng);
    const auto cs = cluster_record(rec, ClusteringConfig{});
    const auto masses = cluster_log_mass(rec, cs, Variant::unnormalized);
    const auto set = predict_set(rec, cs, masses, CalibrationModel::restore(0.1, 1, 3.0 * u(rng), {}));
    std::set<std::size_t> ids;
    for (const auto& e : set.entries) {
      EXPECT_TRUE(ids.insert(e.cluster_id).second);
      EXPECT_EQ(e.response_index, cs.clusters[e.cluster_id].members.front());
      EXPECT_LE(e.score, set.tau);
    }
  }
}

TEST(PredictSet, ShapeMismatchThrows) {
  const auto rec = labelled({0.1, 0.2}, {true, true});
  const ClusterSet cs{{Cluster{0, {0}}, Cluster{1, {1}}}, 2};
  std::vector<ClusterMass> one{mass_of(0.1)};
  EXPECT_EQ(code_of([&] { predict_set(rec, cs, one, CalibrationModel::calibrate({}, 0.1)); }), ErrorCode::ShapeMismatch);
}

TEST(PredictSet, SizeNonIncreasingInEpsilon) {
  std::mt19937_64 rng(61);
  std::exponential_distribution<double> d(0.5);
  std::vector<double> cal(50);
  for (double& s : cal) s = d(rng);
  const auto rec = labelled({0.3, 0.1, 0.05, 0.01, 0.001}, {true, false, false, true, false});
  const auto cs = cluster_record(rec, ClusteringConfig{});
  const auto masses = cluster_log_mass(rec, cs, Variant::unnormalized);
  std::size_t prev = cs.size();
  for (int k = 1; k < 100; ++k) {
    const auto size = predict_set(rec, cs, masses, CalibrationModel::calibrate(cal, k / 100.0)).size();
    EXPECT_LE(size, prev);
    prev = size;
  }
}

TEST(Sweep, CoverageAndSetSize) {
  const auto good = prepare(labelled({0.6, 0.1}, {true, false}), ClusteringConfig{}, Variant::unnormalized);
  const std::vector<PreparedRecord> test{good};
  const std::vector<double> cal{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const std::vector<double> eps{0.1, 0.5};
  const auto sweep = sweep_epsilons(cal, test, eps);
  const auto unbounded = sweep_epsilons(std::vector<double>{}, test, eps);
  EXPECT_EQ(unbounded[0].tau, kInf);
  EXPECT_EQ(unbounded[0].mean_set_size, 2.0);
  ASSERT_EQ(sweep.size(), 2u);
  EXPECT_EQ(sweep[0].tau, 0.9);
  EXPECT_EQ(sweep[0].coverage, 1.0);
  EXPECT_EQ(sweep[0].mean_set_size, 1.0);
  EXPECT_LE(sweep[1].tau, sweep[0].tau);
  EXPECT_LE(sweep[1].mean_set_size, sweep[0].mean_set_size);
  EXPECT_EQ(sweep[1].tau, 0.5);
  EXPECT_EQ(sweep[1].coverage, 0.0);
  EXPECT_EQ(sweep[1].mean_set_size, 0.0);
}

TEST(Sweep, ExchangeableCoverageWithinBinomialBand) {
  // Independent Monte-Carlo with std::mt19937_64: calibration and test scores
  // i.i.d. exponential, one test point per trial.
  std::mt19937_64 rng(71);
  std::exponential_distribution<double> d(1.0);
  const std::size_t n_cal = 49, trials = 4000;
  for (double eps : {0.1, 0.25, 0.5}) {
    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<double> cal(n_cal);
      for (double& s : cal) s = d(rng);
      if (CalibrationModel::calibrate(cal, eps).admits(d(rng))) ++hits;
    }
    const double rate = static_cast<double>(hits) / static_cast<double>(trials);
    const double sigma = std::sqrt(eps * (1.0 - eps) / static_cast<double>(trials));
    EXPECT_GE(rate, 1.0 - eps - 3.0 * sigma);
    EXPECT_LE(rate, 1.0 - eps + 1.0 / (n_cal + 1.0) + 3.0 * sigma);
    EXPECT_NEAR(rate, testing::icp_expected_coverage(n_cal, eps), 3.0 * sigma);
  }
}

}  // namespace
}  // namespace squq
