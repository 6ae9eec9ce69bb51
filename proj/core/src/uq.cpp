#include "squq/uq.hpp"

#include <cmath>

#include "squq/error.hpp"

namespace squq {

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::unnormalized: return "unnormalized";
    case Variant::length_normalized: return "length_normalized";
  }
  return "unnormalized";
}

std::optional<Variant> parse_variant(std::string_view text) noexcept {
  if (text == "unnormalized" || text == "unnorm") return Variant::unnormalized;
  if (text == "length_normalized" || text == "norm") return Variant::length_normalized;
  return std::nullopt;
}

LogProb response_logprob(const Response& r, Variant variant) {
  return variant == Variant::unnormalized ? sequence_logprob(r) : normalized_sequence_logprob(r);
}

std::vector<ClusterMass> cluster_log_mass(const GenerationRecord& rec, const ClusterSet& cs,
                                          Variant variant) {
  std::vector<ClusterMass> out;
  out.reserve(cs.clusters.size());
  std::vector<LogProb> member_lp;
  for (const Cluster& c : cs.clusters) {
    if (c.members.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(c.id) + " is empty");
    member_lp.clear();
    for (std::size_t m : c.members) {
      if (m >= rec.responses.size()) {
        throw Error(ErrorCode::ShapeMismatch, "cluster member " + std::to_string(m) + " outside record");
      }
      member_lp.push_back(response_logprob(rec.responses[m], variant));
    }
    out.push_back(ClusterMass{c.id, log_sum_exp(member_lp), LogProb{}});
  }
  if (out.empty()) return out;

  std::vector<LogProb> all;
  all.reserve(out.size());
  for (const ClusterMass& m : out) all.push_back(m.log_mass);
  const LogProb total = log_sum_exp(all);
  const double uniform = -std::log(static_cast<double>(out.size()));
  for (ClusterMass& m : out) {
    m.normalized_log_mass = total.is_zero_probability()
                                ? LogProb(uniform)
                                : LogProb(m.log_mass.value() - total.value());
  }
  return out;
}

double semantic_entropy(std::span<const ClusterMass> masses) {
  if (masses.empty()) throw Error(ErrorCode::EmptyList, "semantic entropy of no clusters");
  double h = 0.0;
  for (const ClusterMass& m : masses) {
    const double lp = m.normalized_log_mass.value();
    if (std::isinf(lp)) continue;  // p log p -> 0
    h -= std::exp(lp) * lp;
  }
  return h < 0.0 ? 0.0 : h;
}

UqScore score_record(const GenerationRecord& rec, const ClusteringConfig& cfg, Variant variant) {
  const ClusterSet cs = cluster_record(rec, cfg);
  const auto masses = cluster_log_mass(rec, cs, variant);
  return UqScore{rec.query_id, semantic_entropy(masses), variant, cs.size()};
}

}  // namespace squq
