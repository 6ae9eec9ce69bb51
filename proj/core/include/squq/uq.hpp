#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "squq/clustering.hpp"
#include "squq/core.hpp"

namespace squq {

/// Which sentence probability feeds the cluster sums.
enum class Variant {
  unnormalized,       ///< total sequence log-prob
  length_normalized,  ///< mean token log-prob
};

std::string_view to_string(Variant v) noexcept;
/// Accepts "unnormalized"/"unnorm" and "length_normalized"/"norm".
std::optional<Variant> parse_variant(std::string_view text) noexcept;

/// Sentence log-prob under the given variant.
LogProb response_logprob(const Response& r, Variant variant);

struct ClusterMass {
  std::size_t cluster_id = 0;
  /// log of the summed member sentence probabilities.
  LogProb log_mass;
  /// log_mass renormalized over the record's clusters.
  LogProb normalized_log_mass;
};

/// Per-cluster log-mass for `cs`, in cluster order. When every cluster has
/// zero mass the renormalized masses fall back to uniform.
std::vector<ClusterMass> cluster_log_mass(const GenerationRecord& rec, const ClusterSet& cs,
                                          Variant variant);

/// Entropy of the renormalized cluster distribution. Throws EmptyList.
double semantic_entropy(std::span<const ClusterMass> masses);

struct UqScore {
  std::string query_id;
  double semantic_entropy = 0.0;
  Variant variant = Variant::unnormalized;
  /// Cluster-count baseline; larger means more uncertain.
  std::size_t n_clusters = 0;
};

UqScore score_record(const GenerationRecord& rec, const ClusteringConfig& cfg, Variant variant);

}  // namespace squq
