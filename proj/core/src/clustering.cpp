#include "squq/clustering.hpp"

#include <algorithm>
#include <string>

#include "squq/error.hpp"

namespace squq {

std::vector<std::size_t> ClusterSet::assignments() const {
  std::vector<std::size_t> out(n_responses, 0);
  for (const Cluster& c : clusters) {
    for (std::size_t m : c.members) out.at(m) = c.id;
  }
  return out;
}

double pairwise_similarity(const SquareMatrix& entailment_fwd, std::size_t i, std::size_t j) {
  return std::max(entailment_fwd.at(i, j), entailment_fwd.at(j, i));
}

double membership_score(const SquareMatrix& entailment_fwd, const Cluster& c, std::size_t j) {
  if (c.members.empty()) {
    throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(c.id) + " has no members");
  }
  double sum = 0.0;
  for (std::size_t i : c.members) sum += pairwise_similarity(entailment_fwd, i, j);
  return sum / static_cast<double>(c.members.size());
}

double new_cluster_score(double alpha, std::size_t n_clusters) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::NonPositiveAlpha, "alpha must be a positive finite number");
  }
  return alpha / (alpha + static_cast<double>(n_clusters));
}

std::size_t AssignmentDecision::chosen_option() const noexcept {
  return cluster.value_or(scores.size() - 1);
}

AssignmentDecision assign(const SquareMatrix& entailment_fwd, const ClusterSet& partial,
                          std::size_t j, const ClusteringConfig& cfg) {
  if (j >= entailment_fwd.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "response " + std::to_string(j) + " outside matrix");
  }
  AssignmentDecision d;
  d.scores.reserve(partial.clusters.size() + 1);
  for (const Cluster& c : partial.clusters) d.scores.push_back(membership_score(entailment_fwd, c, j));
  d.scores.push_back(new_cluster_score(cfg.alpha, partial.clusters.size()));
  d.probabilities = softmax(d.scores);

  const std::size_t k = argmax(d.scores);
  if (k < partial.clusters.size()) d.cluster = partial.clusters[k].id;
  return d;
}

void apply(ClusterSet& partial, std::size_t j, const AssignmentDecision& decision) {
  if (decision.cluster) {
    auto it = std::find_if(partial.clusters.begin(), partial.clusters.end(),
                           [&](const Cluster& c) { return c.id == *decision.cluster; });
    if (it == partial.clusters.end()) {
      throw Error(ErrorCode::IndexOutOfRange, "unknown cluster " + std::to_string(*decision.cluster));
    }
    it->members.push_back(j);
  } else {
    partial.clusters.push_back(Cluster{partial.clusters.size(), {j}});
  }
  partial.n_responses = std::max(partial.n_responses, j + 1);
}

ClusterSet cluster_responses(const SquareMatrix& entailment_fwd, const ClusteringConfig& cfg) {
  new_cluster_score(cfg.alpha, 0);  // validates alpha even for empty input
  ClusterSet cs;
  for (std::size_t j = 0; j < entailment_fwd.size(); ++j) {
    apply(cs, j, assign(entailment_fwd, cs, j, cfg));
  }
  cs.n_responses = entailment_fwd.size();
  return cs;
}

ClusterSet cluster_record(const GenerationRecord& rec, const ClusteringConfig& cfg) {
  if (rec.entailment_fwd.size() != rec.responses.size()) {
    throw Error(ErrorCode::MatrixShapeMismatch,
                std::to_string(rec.responses.size()) + " responses but " +
                    std::to_string(rec.entailment_fwd.size()) + "x" +
                    std::to_string(rec.entailment_fwd.size()) + " entailment matrix");
  }
  return cluster_responses(rec.entailment_fwd, cfg);
}

}  // namespace squq
