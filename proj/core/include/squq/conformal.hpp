#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "squq/clustering.hpp"
#include "squq/core.hpp"
#include "squq/uq.hpp"

namespace squq {

inline constexpr double kInfiniteThreshold = std::numeric_limits<double>::infinity();

/// Negative log of the unnormalized cluster mass; +inf for a zero-mass cluster.
double nonconformity(const ClusterMass& mass);

/// Clusters whose members are all labelled correct. Throws MissingLabels
/// when any response lacks a label.
std::vector<Cluster> filter_calibration_clusters(const GenerationRecord& rec, const ClusterSet& cs);

/// 1-based rank ceil((n+1)(1-epsilon)), or nullopt when it exceeds n.
/// Throws EpsilonOutOfRange unless 0 < epsilon < 1.
std::optional<std::size_t> quantile_rank(std::size_t n, double epsilon);

class CalibrationModel {
 public:
  /// Sorts the scores and sets the threshold to the quantile_rank-th
  /// smallest, or +inf when the rank overflows or there are no scores.
  static CalibrationModel calibrate(std::vector<double> scores, double epsilon);

  /// Rebuilds a model from serialized fields; recomputes and checks the
  /// threshold when scores are present.
  static CalibrationModel restore(double epsilon, std::size_t n_scores, double threshold,
                                  std::vector<double> scores);

  double epsilon() const noexcept { return epsilon_; }
  double threshold() const noexcept { return threshold_; }
  std::size_t n_scores() const noexcept { return n_scores_; }
  /// Sorted ascending. May be empty for a model restored without scores.
  const std::vector<double>& scores() const noexcept { return scores_; }
  bool admits(double score) const noexcept { return score <= threshold_; }

 private:
  CalibrationModel() = default;
  double epsilon_ = 0.0;
  std::size_t n_scores_ = 0;
  std::vector<double> scores_;
  double threshold_ = kInfiniteThreshold;
};

struct PredictionEntry {
  std::size_t cluster_id = 0;
  std::size_t response_index = 0;
  std::string text;
  double score = 0.0;
};

struct PredictionSet {
  std::string query_id;
  std::vector<PredictionEntry> entries;
  double tau = kInfiniteThreshold;

  std::size_t size() const noexcept { return entries.size(); }
};

/// One representative (the first member) per cluster whose nonconformity is
/// at most the model threshold, in cluster creation order.
PredictionSet predict_set(const GenerationRecord& rec, const ClusterSet& cs,
                          std::span<const ClusterMass> masses, const CalibrationModel& model);

/// A record with its clusters and masses computed once.
struct PreparedRecord {
  GenerationRecord record;
  ClusterSet clusters;
  std::vector<ClusterMass> masses;
};

PreparedRecord prepare(GenerationRecord rec, const ClusteringConfig& cfg, Variant variant);

/// Nonconformity scores of the all-correct clusters of one record.
std::vector<double> calibration_scores(const PreparedRecord& prepared);

/// Pooled calibration scores over many records.
std::vector<double> calibration_scores(std::span<const PreparedRecord> records);

/// True when the prediction set holds at least one response labelled correct.
bool covers(const PredictionSet& set, const GenerationRecord& rec);

struct SweepPoint {
  double epsilon = 0.0;
  double tau = kInfiniteThreshold;
  double coverage = 0.0;
  double mean_set_size = 0.0;
};

/// Recalibrates at every epsilon and evaluates coverage and mean set size
/// on the test records. Test records need correctness labels.
std::vector<SweepPoint> sweep_epsilons(std::span<const double> cal_scores,
                                       std::span<const PreparedRecord> test_records,
                                       std::span<const double> epsilons);

}  // namespace squq
