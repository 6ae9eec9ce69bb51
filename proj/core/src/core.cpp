#include "squq/core.hpp"

#include <algorithm>
#include <string>

#include "squq/error.hpp"

namespace squq {

LogProb::LogProb(double value) : value_(value) {
  if (std::isnan(value)) throw Error(ErrorCode::OutOfRange, "log-probability is NaN");
}

SquareMatrix SquareMatrix::identity(std::size_t n) {
  SquareMatrix m(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SquareMatrix SquareMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  SquareMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) {
      throw Error(ErrorCode::MatrixShapeMismatch,
                  "row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                      " entries, expected " + std::to_string(rows.size()));
    }
    std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + i * m.n_);
  }
  return m;
}

double SquareMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) {
    throw Error(ErrorCode::IndexOutOfRange, "index (" + std::to_string(i) + ", " +
                                                std::to_string(j) + ") outside " +
                                                std::to_string(n_) + "x" + std::to_string(n_));
  }
  return (*this)(i, j);
}

std::vector<std::vector<double>> SquareMatrix::rows() const {
  std::vector<std::vector<double>> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i].assign(row(i).begin(), row(i).end());
  return out;
}

bool GenerationRecord::has_labels() const noexcept {
  return std::all_of(responses.begin(), responses.end(),
                     [](const Response& r) { return r.correct.has_value(); });
}

void validate(const GenerationRecord& rec) {
  const std::size_t n = rec.responses.size();
  if (n == 0) throw Error(ErrorCode::SchemaError, "record has no responses", std::nullopt, "responses");
  if (rec.entailment_fwd.size() != n) {
    throw Error(ErrorCode::MatrixShapeMismatch,
                std::to_string(n) + " responses but " + std::to_string(rec.entailment_fwd.size()) +
                    "x" + std::to_string(rec.entailment_fwd.size()) + " entailment matrix");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Response& r = rec.responses[i];
    if (r.index != i) {
      throw Error(ErrorCode::SchemaError, "response index does not match its position",
                  std::nullopt, "responses[" + std::to_string(i) + "].index");
    }
    for (double lp : r.token_logprobs) {
      if (std::isnan(lp) || lp > 0.0 || (std::isinf(lp) && lp > 0)) {
        throw Error(ErrorCode::SchemaError, "token log-prob must be <= 0",
                    std::nullopt, "responses[" + std::to_string(i) + "].token_logprobs");
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double v = rec.entailment_fwd(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::SchemaError, "entry " + std::to_string(v) + " outside [0,1]",
                    std::nullopt,
                    "entailment_fwd[" + std::to_string(i) + "][" + std::to_string(j) + "]");
      }
    }
    if (rec.entailment_fwd(i, i) != 1.0) {
      throw Error(ErrorCode::SchemaError, "diagonal entry must be 1.0", std::nullopt,
                  "entailment_fwd[" + std::to_string(i) + "][" + std::to_string(i) + "]");
    }
  }
}

LogProb sequence_logprob(const Response& r) {
  if (r.token_logprobs.empty()) {
    throw Error(ErrorCode::EmptyTokenList, "response " + std::to_string(r.index) + " has no token log-probs");
  }
  double sum = 0.0;
  for (double lp : r.token_logprobs) sum += lp;
  return LogProb(sum);
}

LogProb normalized_sequence_logprob(const Response& r) {
  const LogProb total = sequence_logprob(r);
  return LogProb(total.value() / static_cast<double>(r.token_logprobs.size()));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyList, "log_sum_exp of an empty list");
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top)) return top;  // all -inf, or a +inf present
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

LogProb log_sum_exp(std::span<const LogProb> values) {
  std::vector<double> raw;
  raw.reserve(values.size());
  for (LogProb v : values) raw.push_back(v.value());
  return LogProb(log_sum_exp(std::span<const double>(raw)));
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyList, "softmax of an empty list");
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::NonFiniteScore, "softmax score is not finite");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyList, "argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace squq
