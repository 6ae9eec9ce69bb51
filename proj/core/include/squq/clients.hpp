#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "squq/core.hpp"

namespace squq {

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
  /// Relative jitter: delay is scaled by a factor in [1 - jitter, 1 + jitter].
  double jitter = 0.1;
};

/// Delay before retry `attempt` (0-based): min(max_delay, base * 2^attempt)
/// scaled by the jitter factor drawn from `unit` in [0, 1).
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, std::size_t attempt, double unit);

struct RetryEvent {
  std::string endpoint;
  /// 1-based number of the attempt that failed.
  std::size_t attempt = 0;
  /// HTTP status, or 0 for a transport failure.
  int status = 0;
  std::string reason;
  std::chrono::milliseconds delay{0};
};

struct ClientHooks {
  /// Defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
  std::function<void(const RetryEvent&)> on_retry;
};

struct GeneratorConfig {
  std::string base_url;
  /// Name of the environment variable holding the bearer token.
  std::string api_key_env = "SQUQ_API_KEY";
  std::string model_name;
  std::size_t n_samples = 20;
  double temperature = 1.0;
  int max_tokens = 64;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  /// Cap on concurrent requests when sampling one completion per request.
  std::size_t max_in_flight = 4;
  /// Ask for all samples with the `n` parameter instead of one per request.
  bool use_n_parameter = true;
  /// `{context}` and `{question}` are substituted; a missing context is empty.
  std::string prompt_template = "{context}\n\n{question}";
  std::uint64_t seed = 0;
};

struct SidecarConfig {
  std::string base_url;
  std::chrono::milliseconds timeout{30000};
  /// Largest number of texts per matrix request.
  std::size_t batch_size = 64;
  RetryPolicy retry;
  std::uint64_t seed = 0;
};

std::string render_prompt(std::string_view tmpl, std::string_view question,
                          const std::optional<std::string>& context);

/// Client for an OpenAI-compatible completion endpoint.
class GeneratorClient {
 public:
  explicit GeneratorClient(GeneratorConfig cfg, ClientHooks hooks = {});

  /// Samples cfg.n_samples completions with per-token log-probs. Responses are
  /// indexed in completion order. Throws AuthError, EndpointError or
  /// MissingLogprobs.
  std::vector<Response> sample_responses(std::string_view question,
                                         const std::optional<std::string>& context) const;

  const GeneratorConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<Response> request(const std::string& prompt, std::size_t n, std::uint64_t stream) const;

  GeneratorConfig cfg_;
  ClientHooks hooks_;
};

/// Client for the entailment / RougeL scoring service.
class SidecarClient {
 public:
  explicit SidecarClient(SidecarConfig cfg, ClientHooks hooks = {});

  /// Directional matrix, entry (i, j) = p(texts[i] |- texts[j]); unit
  /// diagonal, entries clamped to [0,1]. Lists longer than the batch size are
  /// assembled from block requests. Throws SidecarUnavailable or ShapeError.
  SquareMatrix entailment_matrix(std::span<const std::string> texts) const;

  double rouge_l(std::string_view candidate, std::string_view reference) const;

  const SidecarConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<std::vector<double>> matrix_request(std::span<const std::string> texts) const;

  SidecarConfig cfg_;
  ClientHooks hooks_;
};

struct QuestionSpec {
  std::string query_id;
  std::string question;
  std::optional<std::string> context;
  /// Reference answer; when present responses are labelled by RougeL.
  std::optional<std::string> reference;
};

/// Offline fixture key: FNV-1a 64 of the question, 16 lowercase hex digits.
std::string question_key(std::string_view question);

/// Recorded records keyed by question_key.
class FixtureStore {
 public:
  FixtureStore() = default;
  explicit FixtureStore(std::span<const GenerationRecord> records);
  static FixtureStore load(const std::filesystem::path& corpus);

  const GenerationRecord* find(std::string_view question) const;
  std::size_t size() const noexcept { return records_.size(); }

 private:
  std::map<std::string, GenerationRecord, std::less<>> records_;
};

/// Assembles GenerationRecords from live services or recorded fixtures.
class RecordBuilder {
 public:
  RecordBuilder(GeneratorClient generator, SidecarClient sidecar);
  explicit RecordBuilder(FixtureStore fixtures);

  /// Validated record. Without a reference answer the correctness labels are
  /// absent and the record only suits UQ workflows. Throws FixtureNotFound in
  /// offline mode when no fixture matches the question.
  GenerationRecord build(const QuestionSpec& spec) const;

  bool offline() const noexcept { return fixtures_.has_value(); }

 private:
  std::optional<GeneratorClient> generator_;
  std::optional<SidecarClient> sidecar_;
  std::optional<FixtureStore> fixtures_;
};

}  // namespace squq
