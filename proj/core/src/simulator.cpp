#include "squq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "squq/conformal.hpp"
#include "squq/error.hpp"
#include "squq/random.hpp"

namespace squq {

std::string_view to_string(ScoreDistribution d) noexcept {
  switch (d) {
    case ScoreDistribution::uniform01: return "uniform";
    case ScoreDistribution::exponential1: return "exponential";
    case ScoreDistribution::lognormal01: return "lognormal";
  }
  return "uniform";
}

std::optional<ScoreDistribution> parse_distribution(std::string_view text) noexcept {
  if (text == "uniform" || text == "uniform01") return ScoreDistribution::uniform01;
  if (text == "exponential" || text == "exponential1") return ScoreDistribution::exponential1;
  if (text == "lognormal" || text == "lognormal01") return ScoreDistribution::lognormal01;
  return std::nullopt;
}

bool CoverageResult::meets_guarantee(double epsilon) const noexcept {
  return mean_coverage >= 1.0 - epsilon - 3.0 * binomial_sigma;
}

void validate(const SimConfig& cfg) {
  if (cfg.n_cal < 1 || cfg.n_test < 1 || cfg.trials < 1) {
    throw Error(ErrorCode::InvalidConfig, "n_cal, n_test and trials must be at least 1");
  }
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) {
    throw Error(ErrorCode::EpsilonOutOfRange, "epsilon must lie in (0, 1)");
  }
}

namespace {

double draw(SplitMix64& rng, ScoreDistribution d) {
  switch (d) {
    case ScoreDistribution::uniform01: return rng.uniform01();
    case ScoreDistribution::exponential1: return rng.exponential();
    case ScoreDistribution::lognormal01: return std::exp(rng.normal());
  }
  return rng.uniform01();
}

double run_trial(const SimConfig& cfg, std::size_t trial) {
  SplitMix64 rng = SplitMix64::stream(cfg.seed, trial);
  std::vector<double> cal(cfg.n_cal);
  for (double& s : cal) s = draw(rng, cfg.distribution);
  const auto model = CalibrationModel::calibrate(std::move(cal), cfg.epsilon);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < cfg.n_test; ++i) {
    if (model.admits(draw(rng, cfg.distribution))) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(cfg.n_test);
}

}  // namespace

CoverageResult simulate_coverage(const SimConfig& cfg) {
  validate(cfg);
  CoverageResult out;
  out.per_trial.assign(cfg.trials, 0.0);

  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, cfg.trials);
  if (jobs == 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) out.per_trial[t] = run_trial(cfg, t);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.trials; t += jobs) out.per_trial[t] = run_trial(cfg, t);
      });
    }
  }

  out.mean_coverage = std::accumulate(out.per_trial.begin(), out.per_trial.end(), 0.0) /
                      static_cast<double>(cfg.trials);
  const auto q = quantile_rank(cfg.n_cal, cfg.epsilon);
  out.expected_coverage = q ? static_cast<double>(*q) / static_cast<double>(cfg.n_cal + 1) : 1.0;
  out.binomial_sigma = std::sqrt(cfg.epsilon * (1.0 - cfg.epsilon) / static_cast<double>(cfg.trials));
  return out;
}

void validate(const SyntheticCorpusConfig& cfg) {
  if (cfg.n_responses < 1) throw Error(ErrorCode::InvalidConfig, "n_responses must be at least 1");
  if (cfg.templates.empty()) throw Error(ErrorCode::InvalidConfig, "need at least one response template");
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise must lie in [0, 1]");
  if (!(cfg.max_level <= 0.0 && cfg.min_level <= cfg.max_level && std::isfinite(cfg.min_level))) {
    throw Error(ErrorCode::InvalidConfig, "log-prob levels must satisfy min_level <= max_level <= 0");
  }
  if (cfg.group_sizes.empty()) {
    if (cfg.max_groups < 1) throw Error(ErrorCode::InvalidConfig, "max_groups must be at least 1");
  } else {
    const std::size_t total = std::accumulate(cfg.group_sizes.begin(), cfg.group_sizes.end(), std::size_t{0});
    if (total != cfg.n_responses || std::find(cfg.group_sizes.begin(), cfg.group_sizes.end(), 0) != cfg.group_sizes.end()) {
      throw Error(ErrorCode::InvalidConfig, "group_sizes must be positive and sum to n_responses");
    }
  }
}

namespace {

std::vector<std::size_t> draw_group_sizes(const SyntheticCorpusConfig& cfg, SplitMix64& rng) {
  if (!cfg.group_sizes.empty()) return cfg.group_sizes;
  const std::size_t cap = std::min(cfg.max_groups, cfg.n_responses);
  const std::size_t k = 1 + rng.below(cap);
  std::vector<std::size_t> sizes(k, 1);
  for (std::size_t r = k; r < cfg.n_responses; ++r) sizes[rng.below(k)] += 1;
  return sizes;
}

std::string group_text(const SyntheticCorpusConfig& cfg, std::size_t g) {
  std::string text = cfg.templates[g % cfg.templates.size()];
  if (g >= cfg.templates.size()) text += " (" + std::to_string(g) + ")";
  return text;
}

char hex_digit(std::size_t v) { return "0123456789abcdef"[v & 0xF]; }

}  // namespace

std::vector<PlantedRecord> generate_planted_corpus(const SyntheticCorpusConfig& cfg) {
  validate(cfg);
  std::vector<PlantedRecord> out;
  out.reserve(cfg.n_queries);
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    SplitMix64 rng = SplitMix64::stream(cfg.seed, q);
    PlantedRecord pr;
    const auto sizes = draw_group_sizes(cfg, rng);
    const std::size_t n = cfg.n_responses;

    // Generation order: group labels shuffled by Fisher-Yates.
    pr.group_of.reserve(n);
    for (std::size_t g = 0; g < sizes.size(); ++g) pr.group_of.insert(pr.group_of.end(), sizes[g], g);
    for (std::size_t i = n; i > 1; --i) std::swap(pr.group_of[i - 1], pr.group_of[rng.below(i)]);

    std::vector<double> level(sizes.size());
    for (double& l : level) l = rng.uniform(cfg.min_level, cfg.max_level);
    pr.correct_group = rng.below(sizes.size());

    GenerationRecord& rec = pr.record;
    std::string id = "synth-";
    for (int shift = 20; shift >= 0; shift -= 4) id += hex_digit(q >> shift);
    rec.query_id = id;
    rec.question = "synthetic question " + std::to_string(q);
    rec.responses.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Response& r = rec.responses[i];
      const std::size_t g = pr.group_of[i];
      r.index = i;
      r.text = group_text(cfg, g);
      r.correct = (g == pr.correct_group);
      const double total = std::min(0.0, level[g] - 0.5 * rng.uniform01());
      const std::size_t len = 1 + rng.below(6);
      std::vector<double> weight(len);
      for (double& w : weight) w = 0.5 + rng.uniform01();
      const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
      r.token_logprobs.resize(len);
      for (std::size_t t = 0; t < len; ++t) r.token_logprobs[t] = total * weight[t] / wsum;
    }
    rec.entailment_fwd = SquareMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double u = rng.uniform01();
        rec.entailment_fwd(i, j) =
            pr.group_of[i] == pr.group_of[j] ? 1.0 - cfg.noise * u : cfg.noise * u;
      }
    }
    out.push_back(std::move(pr));
  }
  return out;
}

std::vector<GenerationRecord> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  auto planted = generate_planted_corpus(cfg);
  std::vector<GenerationRecord> out;
  out.reserve(planted.size());
  for (auto& p : planted) out.push_back(std::move(p.record));
  return out;
}

}  // namespace squq
