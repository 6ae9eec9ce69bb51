#pragma once

#include <span>
#include <string>
#include <vector>

#include "squq/core.hpp"

namespace squq {

struct LabeledScore {
  std::string query_id;
  /// Higher means more uncertain.
  double uncertainty = 0.0;
  bool correct = false;
};

struct CurvePoint {
  double rejection_fraction = 0.0;
  double accuracy = 0.0;
};

/// Mann-Whitney AUROC of uncertainty as a detector of incorrect answers:
/// P(u_incorrect > u_correct) + 0.5 P(tie). Throws DegenerateLabels.
double auroc(std::span<const LabeledScore> items);

/// Items ordered most-uncertain first; ties broken by query_id.
std::vector<LabeledScore> rejection_order(std::span<const LabeledScore> items);

/// Accuracy of the retained items at rejection fractions k/n, k = 0..n-1,
/// plus a final point at 1.0 repeating the last accuracy.
std::vector<CurvePoint> accuracy_rejection_curve(std::span<const LabeledScore> items);
double auarc(std::span<const LabeledScore> items);

/// Accuracy of the rejected items at rejection fractions k/n, k = 1..n.
/// Lower is better.
std::vector<CurvePoint> rejection_accuracy_curve(std::span<const LabeledScore> items);
double aurac(std::span<const LabeledScore> items);

/// Strict rating > 0.7. Throws OutOfRange outside [0,1].
bool correctness_from_rating(double rating);
/// Strict RougeL > 0.3. Throws OutOfRange outside [0,1].
bool correctness_from_rouge_l(double score);

enum class AnswerSelection {
  most_likely,     ///< highest sequence log-prob, lowest index on ties
  first_response,  ///< response 0
};

/// Index of the response whose label stands for the query.
std::size_t primary_response(const GenerationRecord& rec, AnswerSelection selection);

/// Mean correctness over every individual sampled response.
double point_accuracy(std::span<const GenerationRecord> records);

}  // namespace squq
