#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "squq/core.hpp"

namespace squq {

enum class ScoreDistribution { uniform01, exponential1, lognormal01 };

std::string_view to_string(ScoreDistribution d) noexcept;
/// Accepts "uniform", "exponential", "lognormal" (and the full enum names).
std::optional<ScoreDistribution> parse_distribution(std::string_view text) noexcept;

struct SimConfig {
  std::size_t n_cal = 99;
  std::size_t n_test = 100;
  std::size_t trials = 2000;
  double epsilon = 0.2;
  std::uint64_t seed = 0;
  ScoreDistribution distribution = ScoreDistribution::uniform01;
  /// Worker threads; results do not depend on it.
  std::size_t jobs = 1;
};

struct CoverageResult {
  double mean_coverage = 0.0;
  std::vector<double> per_trial;
  /// Exact expectation q/(n_cal+1) (1.0 when the rank overflows).
  double expected_coverage = 0.0;
  /// sqrt(eps (1-eps) / trials): bounds the standard error of the mean
  /// since each trial's coverage is an average of Bernoulli(1-eps)-ish events.
  double binomial_sigma = 0.0;

  /// mean >= 1 - eps - 3 sigma.
  bool meets_guarantee(double epsilon) const noexcept;
};

/// Throws InvalidConfig or EpsilonOutOfRange.
void validate(const SimConfig& cfg);

/// Draws n_cal + n_test i.i.d. scores per trial, calibrates on the first
/// n_cal, and records the fraction of test scores at or below the threshold.
/// Trial t draws from SplitMix64::stream(seed, t).
CoverageResult simulate_coverage(const SimConfig& cfg);

struct SyntheticCorpusConfig {
  std::size_t n_queries = 100;
  std::size_t n_responses = 20;
  /// Response text per planted group, cycled when groups outnumber templates.
  std::vector<std::string> templates = {"Paris", "London", "Berlin", "Madrid", "Rome", "Vienna"};
  /// Planted groups per query are drawn uniformly from [1, max_groups]
  /// unless `group_sizes` fixes them.
  std::size_t max_groups = 4;
  std::vector<std::size_t> group_sizes;
  /// Within-group entailment is 1 - noise*u, cross-group noise*u, u ~ U[0,1).
  double noise = 0.1;
  /// Per-group sequence log-prob level is drawn from [min_level, max_level].
  double min_level = -8.0;
  double max_level = -0.5;
  std::uint64_t seed = 0;
};

void validate(const SyntheticCorpusConfig& cfg);

/// Planted group id of every response, same order as the record's responses.
struct PlantedRecord {
  GenerationRecord record;
  std::vector<std::size_t> group_of;
  std::size_t correct_group = 0;
};

/// Query q draws from SplitMix64::stream(seed, q). Exactly one planted group
/// per query is labelled correct.
std::vector<PlantedRecord> generate_planted_corpus(const SyntheticCorpusConfig& cfg);
std::vector<GenerationRecord> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg);

}  // namespace squq
