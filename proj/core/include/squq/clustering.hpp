#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "squq/core.hpp"

namespace squq {

struct Cluster {
  std::size_t id = 0;
  /// Response indices in insertion order; the first entry is the representative.
  std::vector<std::size_t> members;

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct ClusterSet {
  std::vector<Cluster> clusters;
  std::size_t n_responses = 0;

  std::size_t size() const noexcept { return clusters.size(); }
  /// Cluster id for every response index.
  std::vector<std::size_t> assignments() const;

  friend bool operator==(const ClusterSet&, const ClusterSet&) = default;
};

struct ClusteringConfig {
  /// CRP rate parameter: prior weight on opening a new cluster.
  double alpha = 0.5;
};

/// max(p(i |- j), p(j |- i)). Throws IndexOutOfRange.
double pairwise_similarity(const SquareMatrix& entailment_fwd, std::size_t i, std::size_t j);

/// Mean similarity between response `j` and the members of `c`.
double membership_score(const SquareMatrix& entailment_fwd, const Cluster& c, std::size_t j);

/// alpha / (alpha + n_clusters). Throws NonPositiveAlpha.
double new_cluster_score(double alpha, std::size_t n_clusters);

struct AssignmentDecision {
  /// Existing cluster id, or nullopt when a new cluster is opened.
  std::optional<std::size_t> cluster;
  /// Raw option scores; the new-cluster option is the last entry.
  std::vector<double> scores;
  std::vector<double> probabilities;

  bool opens_new_cluster() const noexcept { return !cluster.has_value(); }
  std::size_t chosen_option() const noexcept;
};

/// Decides where response `j` goes given the clusters built so far.
///
/// Scores every existing cluster by mean membership, appends the new-cluster
/// prior last, and takes the argmax. Ties go to the lowest option index, so an
/// exact tie with the prior joins the existing cluster. The softmax is
/// monotone and does not change the decision; it is computed for audit.
AssignmentDecision assign(const SquareMatrix& entailment_fwd, const ClusterSet& partial,
                          std::size_t j, const ClusteringConfig& cfg);

/// Applies a decision produced by `assign` for response `j`.
void apply(ClusterSet& partial, std::size_t j, const AssignmentDecision& decision);

/// Sequential clustering of responses 0..n-1 in generation order.
ClusterSet cluster_responses(const SquareMatrix& entailment_fwd, const ClusteringConfig& cfg);

/// Clusters a record's responses. Throws MatrixShapeMismatch when the
/// matrix side differs from the response count.
ClusterSet cluster_record(const GenerationRecord& rec, const ClusteringConfig& cfg);

}  // namespace squq
