#include "squq/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "squq/error.hpp"

namespace squq {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::EpsilonOutOfRange, "epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  }
}

// (n+1)(1-eps) is evaluated in binary floating point; values such as
// 10 * (1 - 0.2) must not round up past the exact integer.
constexpr double kRankSlack = 1e-9;

}  // namespace

double nonconformity(const ClusterMass& mass) {
  if (mass.log_mass.is_zero_probability()) return kInfiniteThreshold;
  return -mass.log_mass.value();
}

std::vector<Cluster> filter_calibration_clusters(const GenerationRecord& rec, const ClusterSet& cs) {
  if (!rec.has_labels()) {
    throw Error(ErrorCode::MissingLabels, "record " + rec.query_id + " lacks correctness labels");
  }
  std::vector<Cluster> kept;
  for (const Cluster& c : cs.clusters) {
    const bool all_correct = std::all_of(c.members.begin(), c.members.end(), [&](std::size_t m) {
      return *rec.responses.at(m).correct;
    });
    if (all_correct) kept.push_back(c);
  }
  return kept;
}

std::optional<std::size_t> quantile_rank(std::size_t n, double epsilon) {
  check_epsilon(epsilon);
  const double target = static_cast<double>(n + 1) * (1.0 - epsilon);
  const auto q = static_cast<std::size_t>(std::ceil(target - kRankSlack));
  if (q > n) return std::nullopt;
  return std::max<std::size_t>(q, 1);
}

CalibrationModel CalibrationModel::calibrate(std::vector<double> scores, double epsilon) {
  check_epsilon(epsilon);
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::NonFiniteScore, "calibration score is NaN");
  }
  std::sort(scores.begin(), scores.end());
  CalibrationModel m;
  m.epsilon_ = epsilon;
  m.n_scores_ = scores.size();
  const auto q = quantile_rank(scores.size(), epsilon);
  m.threshold_ = (q && !scores.empty()) ? scores[*q - 1] : kInfiniteThreshold;
  m.scores_ = std::move(scores);
  return m;
}

CalibrationModel CalibrationModel::restore(double epsilon, std::size_t n_scores, double threshold,
                                           std::vector<double> scores) {
  if (!scores.empty()) {
    CalibrationModel m = calibrate(std::move(scores), epsilon);
    if (m.n_scores_ != n_scores || m.threshold_ != threshold) {
      throw Error(ErrorCode::SchemaError, "threshold inconsistent with stored scores", std::nullopt, "threshold");
    }
    return m;
  }
  check_epsilon(epsilon);
  if (std::isnan(threshold)) throw Error(ErrorCode::SchemaError, "threshold is NaN", std::nullopt, "threshold");
  CalibrationModel m;
  m.epsilon_ = epsilon;
  m.n_scores_ = n_scores;
  m.threshold_ = threshold;
  return m;
}

PredictionSet predict_set(const GenerationRecord& rec, const ClusterSet& cs,
                          std::span<const ClusterMass> masses, const CalibrationModel& model) {
  if (masses.size() != cs.clusters.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(masses.size()) + " masses for " +
                                              std::to_string(cs.clusters.size()) + " clusters");
  }
  PredictionSet out;
  out.query_id = rec.query_id;
  out.tau = model.threshold();
  for (std::size_t k = 0; k < cs.clusters.size(); ++k) {
    const Cluster& c = cs.clusters[k];
    if (masses[k].cluster_id != c.id || c.members.empty()) {
      throw Error(ErrorCode::ShapeMismatch, "masses not aligned with clusters");
    }
    const double score = nonconformity(masses[k]);
    if (!model.admits(score)) continue;
    const std::size_t first = c.members.front();
    if (first >= rec.responses.size()) {
      throw Error(ErrorCode::ShapeMismatch, "cluster member outside record");
    }
    out.entries.push_back(PredictionEntry{c.id, first, rec.responses[first].text, score});
  }
  return out;
}

PreparedRecord prepare(GenerationRecord rec, const ClusteringConfig& cfg, Variant variant) {
  PreparedRecord p;
  p.clusters = cluster_record(rec, cfg);
  p.masses = cluster_log_mass(rec, p.clusters, variant);
  p.record = std::move(rec);
  return p;
}

std::vector<double> calibration_scores(const PreparedRecord& prepared) {
  std::vector<double> out;
  for (const Cluster& c : filter_calibration_clusters(prepared.record, prepared.clusters)) {
    out.push_back(nonconformity(prepared.masses.at(c.id)));
  }
  return out;
}

std::vector<double> calibration_scores(std::span<const PreparedRecord> records) {
  std::vector<double> out;
  for (const PreparedRecord& p : records) {
    const auto scores = calibration_scores(p);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

bool covers(const PredictionSet& set, const GenerationRecord& rec) {
  return std::any_of(set.entries.begin(), set.entries.end(), [&](const PredictionEntry& e) {
    const auto& label = rec.responses.at(e.response_index).correct;
    if (!label) throw Error(ErrorCode::MissingLabels, "record " + rec.query_id + " lacks correctness labels");
    return *label;
  });
}

std::vector<SweepPoint> sweep_epsilons(std::span<const double> cal_scores,
                                       std::span<const PreparedRecord> test_records,
                                       std::span<const double> epsilons) {
  std::vector<SweepPoint> out;
  out.reserve(epsilons.size());
  const std::vector<double> pooled(cal_scores.begin(), cal_scores.end());
  for (double eps : epsilons) {
    const CalibrationModel model = CalibrationModel::calibrate(pooled, eps);
    SweepPoint pt{eps, model.threshold(), 0.0, 0.0};
    std::size_t covered = 0;
    std::size_t total_size = 0;
    for (const PreparedRecord& p : test_records) {
      const PredictionSet set = predict_set(p.record, p.clusters, p.masses, model);
      if (covers(set, p.record)) ++covered;
      total_size += set.size();
    }
    if (!test_records.empty()) {
      const double n = static_cast<double>(test_records.size());
      pt.coverage = static_cast<double>(covered) / n;
      pt.mean_set_size = static_cast<double>(total_size) / n;
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace squq
