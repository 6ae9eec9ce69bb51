#include "squq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "squq/error.hpp"

namespace squq {

double auroc(std::span<const LabeledScore> items) {
  std::vector<LabeledScore> sorted(items.begin(), items.end());
  for (const auto& it : sorted) {
    if (!std::isfinite(it.uncertainty)) throw Error(ErrorCode::NonFiniteScore, "uncertainty is not finite");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.uncertainty < b.uncertainty; });

  // Doubled Mann-Whitney statistic in integers: 2 per strictly ordered
  // (incorrect above correct) pair, 1 per tie.
  std::uint64_t correct_below = 0;
  std::uint64_t n_correct = 0;
  std::uint64_t n_incorrect = 0;
  std::uint64_t doubled = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::uint64_t group_correct = 0;
    std::uint64_t group_incorrect = 0;
    while (j < sorted.size() && sorted[j].uncertainty == sorted[i].uncertainty) {
      (sorted[j].correct ? group_correct : group_incorrect) += 1;
      ++j;
    }
    doubled += 2 * group_incorrect * correct_below + group_incorrect * group_correct;
    correct_below += group_correct;
    n_correct += group_correct;
    n_incorrect += group_incorrect;
    i = j;
  }
  if (n_correct == 0 || n_incorrect == 0) {
    throw Error(ErrorCode::DegenerateLabels, "AUROC needs both correct and incorrect items");
  }
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(n_correct) * static_cast<double>(n_incorrect));
}

std::vector<LabeledScore> rejection_order(std::span<const LabeledScore> items) {
  std::vector<LabeledScore> sorted(items.begin(), items.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const LabeledScore& a, const LabeledScore& b) {
    if (a.uncertainty != b.uncertainty) return a.uncertainty > b.uncertainty;
    return a.query_id < b.query_id;
  });
  return sorted;
}

std::vector<CurvePoint> accuracy_rejection_curve(std::span<const LabeledScore> items) {
  if (items.empty()) throw Error(ErrorCode::EmptyList, "accuracy-rejection curve of no items");
  const auto order = rejection_order(items);
  const std::size_t n = order.size();
  // suffix[k] = correct items among order[k..n)
  std::vector<std::size_t> suffix(n + 1, 0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + (order[k].correct ? 1 : 0);

  std::vector<CurvePoint> curve;
  curve.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    curve.push_back({static_cast<double>(k) / static_cast<double>(n),
                     static_cast<double>(suffix[k]) / static_cast<double>(n - k)});
  }
  curve.push_back({1.0, curve.back().accuracy});
  return curve;
}

double auarc(std::span<const LabeledScore> items) {
  const auto curve = accuracy_rejection_curve(items);
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < curve.size(); ++k) sum += curve[k].accuracy;
  return sum / static_cast<double>(curve.size() - 1);
}

std::vector<CurvePoint> rejection_accuracy_curve(std::span<const LabeledScore> items) {
  if (items.empty()) throw Error(ErrorCode::EmptyList, "rejection-accuracy curve of no items");
  const auto order = rejection_order(items);
  const std::size_t n = order.size();
  std::vector<CurvePoint> curve;
  curve.reserve(n);
  std::size_t rejected_correct = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    rejected_correct += order[k - 1].correct ? 1 : 0;
    curve.push_back({static_cast<double>(k) / static_cast<double>(n),
                     static_cast<double>(rejected_correct) / static_cast<double>(k)});
  }
  return curve;
}

double aurac(std::span<const LabeledScore> items) {
  const auto curve = rejection_accuracy_curve(items);
  double sum = 0.0;
  for (const CurvePoint& p : curve) sum += p.accuracy;
  return sum / static_cast<double>(curve.size());
}

namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfRange, std::string(what) + " outside [0,1]");
}

}  // namespace

bool correctness_from_rating(double rating) {
  check_unit(rating, "rating");
  return rating > 0.7;
}

bool correctness_from_rouge_l(double score) {
  check_unit(score, "rougeL");
  return score > 0.3;
}

std::size_t primary_response(const GenerationRecord& rec, AnswerSelection selection) {
  if (rec.responses.empty()) throw Error(ErrorCode::EmptyList, "record " + rec.query_id + " has no responses");
  if (selection == AnswerSelection::first_response) return 0;
  std::size_t best = 0;
  double best_lp = sequence_logprob(rec.responses[0]).value();
  for (std::size_t i = 1; i < rec.responses.size(); ++i) {
    const double lp = sequence_logprob(rec.responses[i]).value();
    if (lp > best_lp) {
      best = i;
      best_lp = lp;
    }
  }
  return best;
}

double point_accuracy(std::span<const GenerationRecord> records) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    for (const auto& r : rec.responses) {
      if (!r.correct) throw Error(ErrorCode::MissingLabels, "record " + rec.query_id + " lacks correctness labels");
      ++total;
      correct += *r.correct ? 1 : 0;
    }
  }
  if (total == 0) throw Error(ErrorCode::EmptyList, "no responses");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace squq
