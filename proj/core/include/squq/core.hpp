#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace squq {

/// Natural-log probability. May be -inf (probability zero); never NaN.
///
/// Sequence and token log-probs are always <= 0. Cluster masses are sums of
/// sentence probabilities and can exceed 1, so the type itself does not
/// enforce an upper bound.
class LogProb {
 public:
  constexpr LogProb() = default;
  explicit LogProb(double value);

  static constexpr LogProb zero_probability() noexcept {
    LogProb p;
    p.value_ = -std::numeric_limits<double>::infinity();
    return p;
  }
  static constexpr LogProb certain() noexcept { return LogProb{}; }

  constexpr double value() const noexcept { return value_; }
  bool is_zero_probability() const noexcept { return std::isinf(value_) && value_ < 0; }
  double probability() const noexcept { return std::exp(value_); }

  friend constexpr bool operator==(LogProb, LogProb) = default;
  friend constexpr auto operator<=>(LogProb a, LogProb b) { return a.value_ <=> b.value_; }

 private:
  double value_ = 0.0;
};

struct Response {
  std::string text;
  std::vector<double> token_logprobs;
  std::size_t index = 0;
  std::optional<bool> correct;
  std::optional<double> gpt4_rating;
  std::optional<double> rouge_l;

  friend bool operator==(const Response&, const Response&) = default;
};

/// Dense row-major N x N matrix of reals.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  static SquareMatrix identity(std::size_t n);
  /// Builds from nested rows; throws MatrixShapeMismatch if not square.
  static SquareMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  /// Bounds-checked read; throws IndexOutOfRange.
  double at(std::size_t i, std::size_t j) const;

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::vector<std::vector<double>> rows() const;

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct GenerationRecord {
  std::string query_id;
  std::string question;
  std::optional<std::string> context;
  std::vector<Response> responses;
  /// Entry (i, j) is p(response i entails response j).
  SquareMatrix entailment_fwd;

  std::size_t size() const noexcept { return responses.size(); }
  /// True when every response carries a correctness label.
  bool has_labels() const noexcept;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

/// Checks the record invariants: square matrix matching the response count,
/// entries in [0,1], unit diagonal, index == position, token log-probs <= 0.
/// Throws MatrixShapeMismatch or SchemaError.
void validate(const GenerationRecord& rec);

/// Sum of token log-probs: log of the product of conditional token probabilities.
LogProb sequence_logprob(const Response& r);

/// Mean token log-prob (log of the geometric-mean token probability).
LogProb normalized_sequence_logprob(const Response& r);

LogProb log_sum_exp(std::span<const LogProb> values);
double log_sum_exp(std::span<const double> values);

/// Max-shifted softmax. Throws EmptyList or NonFiniteScore.
std::vector<double> softmax(std::span<const double> scores);

/// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace squq
