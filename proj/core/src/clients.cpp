#include "squq/clients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "squq/error.hpp"
#include "squq/ingest.hpp"
#include "squq/metrics.hpp"
#include "squq/random.hpp"

namespace squq {

namespace {

using nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "base URL needs a scheme: " + url);
  }
  if (url.compare(0, scheme_end, "http") != 0) {
    throw Error(ErrorCode::InvalidConfig, "only http:// endpoints are supported: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    ep.prefix = url.substr(path_start);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  return ep;
}

struct HttpOutcome {
  int status = 0;  // 0: transport failure
  std::string body;
  std::string reason;
};

HttpOutcome post_json(const Endpoint& ep, const std::string& path, const std::string& body,
                      std::chrono::milliseconds timeout, const httplib::Headers& headers = {}) {
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  HttpOutcome out;
  auto res = client.Post(ep.prefix + path, headers, body, "application/json");
  if (!res) {
    out.reason = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  out.reason = "HTTP " + std::to_string(res->status);
  return out;
}

bool transient(int status) { return status == 0 || status == 429 || status >= 500; }

/// Posts until a 200 arrives. `fatal` may throw for non-retryable statuses;
/// exhausting the retries throws `exhausted`.
std::string post_with_retries(const Endpoint& ep, const std::string& path, const std::string& body,
                              std::chrono::milliseconds timeout, const httplib::Headers& headers,
                              const RetryPolicy& policy, const ClientHooks& hooks, SplitMix64& jitter,
                              const std::function<void(const HttpOutcome&)>& fatal, ErrorCode exhausted) {
  HttpOutcome last;
  for (std::size_t attempt = 0;; ++attempt) {
    last = post_json(ep, path, body, timeout, headers);
    if (last.status == 200) return std::move(last.body);
    if (!transient(last.status)) fatal(last);
    if (attempt >= policy.max_retries) break;

    RetryEvent ev{ep.origin + ep.prefix + path, attempt + 1, last.status, last.reason,
                  backoff_delay(policy, attempt, jitter.uniform01())};
    if (hooks.on_retry) hooks.on_retry(ev);
    if (hooks.sleep) hooks.sleep(ev.delay);
    else std::this_thread::sleep_for(ev.delay);
  }
  throw Error(exhausted, ep.origin + ep.prefix + path + " failed after " +
                             std::to_string(policy.max_retries + 1) + " attempts: " + last.reason);
}

json parse_body(const std::string& body, ErrorCode code, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(code, what + " returned invalid JSON: " + e.what());
  }
}

}  // namespace

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, std::size_t attempt, double unit) {
  const double base = static_cast<double>(policy.base_delay.count());
  const double cap = static_cast<double>(policy.max_delay.count());
  const double raw = std::min(cap, base * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(attempt, 60))));
  const double factor = 1.0 + policy.jitter * (2.0 * unit - 1.0);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(std::max(0.0, raw * factor))));
}

std::string render_prompt(std::string_view tmpl, std::string_view question,
                          const std::optional<std::string>& context) {
  std::string out;
  out.reserve(tmpl.size() + question.size() + (context ? context->size() : 0));
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 10, "{question}") == 0) {
      out += question;
      i += 10;
    } else if (tmpl.compare(i, 9, "{context}") == 0) {
      if (context) out += *context;
      i += 9;
    } else {
      out += tmpl[i++];
    }
  }
  // An absent context leaves the template's separator lines at the front.
  if (!context) {
    const auto first = out.find_first_not_of('\n');
    out.erase(0, first == std::string::npos ? out.size() : first);
  }
  return out;
}

GeneratorClient::GeneratorClient(GeneratorConfig cfg, ClientHooks hooks)
    : cfg_(std::move(cfg)), hooks_(std::move(hooks)) {
  if (cfg_.n_samples < 1) throw Error(ErrorCode::InvalidConfig, "n_samples must be at least 1");
  if (cfg_.max_in_flight < 1) throw Error(ErrorCode::InvalidConfig, "max_in_flight must be at least 1");
  parse_base_url(cfg_.base_url);
}

std::vector<Response> GeneratorClient::request(const std::string& prompt, std::size_t n,
                                               std::uint64_t stream) const {
  const Endpoint ep = parse_base_url(cfg_.base_url);
  json body = {{"model", cfg_.model_name}, {"prompt", prompt},          {"max_tokens", cfg_.max_tokens},
               {"temperature", cfg_.temperature}, {"logprobs", true}, {"n", n}};
  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  SplitMix64 jitter = SplitMix64::stream(cfg_.seed, stream);
  const std::string raw = post_with_retries(
      ep, "/v1/completions", body.dump(), cfg_.timeout, headers, cfg_.retry, hooks_, jitter,
      [](const HttpOutcome& o) {
        if (o.status == 401 || o.status == 403) throw Error(ErrorCode::AuthError, "completion endpoint rejected credentials (" + o.reason + ")");
        throw Error(ErrorCode::EndpointError, "completion endpoint returned " + o.reason + ": " + o.body);
      },
      ErrorCode::EndpointError);

  const json doc = parse_body(raw, ErrorCode::EndpointError, "completion endpoint");
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::EndpointError, "completion response has no choices");
  }
  std::vector<Response> out;
  for (const json& choice : *choices) {
    Response r;
    auto text = choice.find("text");
    if (text == choice.end() || !text->is_string()) throw Error(ErrorCode::EndpointError, "choice without text");
    r.text = text->get<std::string>();
    auto lp = choice.find("logprobs");
    if (lp == choice.end() || !lp->is_object()) throw Error(ErrorCode::MissingLogprobs, "choice has no logprobs");
    auto tokens = lp->find("token_logprobs");
    if (tokens == lp->end() || !tokens->is_array() || tokens->empty()) {
      throw Error(ErrorCode::MissingLogprobs, "choice has no token_logprobs");
    }
    for (const json& v : *tokens) {
      if (!v.is_number()) throw Error(ErrorCode::MissingLogprobs, "token log-prob is not a number");
      const double x = v.get<double>();
      if (std::isnan(x)) throw Error(ErrorCode::MissingLogprobs, "token log-prob is NaN");
      r.token_logprobs.push_back(std::min(x, 0.0));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Response> GeneratorClient::sample_responses(std::string_view question,
                                                        const std::optional<std::string>& context) const {
  const std::string prompt = render_prompt(cfg_.prompt_template, question, context);
  std::vector<Response> out;

  if (cfg_.use_n_parameter) {
    std::uint64_t stream = 0;
    while (out.size() < cfg_.n_samples) {
      auto batch = request(prompt, cfg_.n_samples - out.size(), stream++);
      for (auto& r : batch) {
        if (out.size() == cfg_.n_samples) break;
        out.push_back(std::move(r));
      }
    }
  } else {
    // Fan out single-sample requests, at most max_in_flight at a time.
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
      for (;;) {
        std::size_t mine;
        {
          std::lock_guard lock(mu);
          if (next >= cfg_.n_samples || failure) return;
          mine = next++;
        }
        try {
          auto batch = request(prompt, 1, mine);
          std::lock_guard lock(mu);
          out.push_back(std::move(batch.front()));
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < std::min(cfg_.max_in_flight, cfg_.n_samples); ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

SidecarClient::SidecarClient(SidecarConfig cfg, ClientHooks hooks)
    : cfg_(std::move(cfg)), hooks_(std::move(hooks)) {
  if (cfg_.batch_size < 1) throw Error(ErrorCode::InvalidConfig, "sidecar batch size must be at least 1");
  parse_base_url(cfg_.base_url);
}

std::vector<std::vector<double>> SidecarClient::matrix_request(std::span<const std::string> texts) const {
  const Endpoint ep = parse_base_url(cfg_.base_url);
  const json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  SplitMix64 jitter = SplitMix64::stream(cfg_.seed, fnv1a64(body.dump()));
  const std::string raw = post_with_retries(
      ep, "/v1/entailment/matrix", body.dump(), cfg_.timeout, {}, cfg_.retry, hooks_, jitter,
      [](const HttpOutcome& o) {
        throw Error(ErrorCode::SidecarUnavailable, "entailment matrix request returned " + o.reason + ": " + o.body);
      },
      ErrorCode::SidecarUnavailable);

  const json doc = parse_body(raw, ErrorCode::ShapeError, "sidecar");
  auto m = doc.find("matrix");
  const std::size_t n = texts.size();
  if (m == doc.end() || !m->is_array() || m->size() != n) {
    throw Error(ErrorCode::ShapeError, "sidecar matrix does not have " + std::to_string(n) + " rows");
  }
  std::vector<std::vector<double>> rows(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = (*m)[i];
    if (!row.is_array() || row.size() != n) {
      throw Error(ErrorCode::ShapeError, "sidecar matrix row " + std::to_string(i) + " does not have " +
                                             std::to_string(n) + " entries");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!row[j].is_number() || std::isnan(row[j].get<double>())) {
        throw Error(ErrorCode::ShapeError, "sidecar matrix entry is not a number");
      }
      rows[i][j] = std::clamp(row[j].get<double>(), 0.0, 1.0);
    }
  }
  return rows;
}

SquareMatrix SidecarClient::entailment_matrix(std::span<const std::string> texts) const {
  if (texts.empty()) throw Error(ErrorCode::EmptyList, "entailment matrix of no texts");
  const std::size_t n = texts.size();
  SquareMatrix out(n);

  if (n <= cfg_.batch_size) {
    const auto rows = matrix_request(texts);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = rows[i][j];
  } else {
    // Blocks of half the batch size so every pair of blocks fits one request.
    const std::size_t block = std::max<std::size_t>(1, cfg_.batch_size / 2);
    for (std::size_t a = 0; a < n; a += block) {
      for (std::size_t b = a; b < n; b += block) {
        std::vector<std::size_t> idx;
        for (std::size_t i = a; i < std::min(n, a + block); ++i) idx.push_back(i);
        if (b != a)
          for (std::size_t i = b; i < std::min(n, b + block); ++i) idx.push_back(i);
        std::vector<std::string> sub;
        for (std::size_t i : idx) sub.push_back(texts[i]);
        const auto rows = matrix_request(sub);
        for (std::size_t x = 0; x < idx.size(); ++x)
          for (std::size_t y = 0; y < idx.size(); ++y) out(idx[x], idx[y]) = rows[x][y];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

double SidecarClient::rouge_l(std::string_view candidate, std::string_view reference) const {
  const Endpoint ep = parse_base_url(cfg_.base_url);
  const json body = {{"candidate", candidate}, {"reference", reference}};
  SplitMix64 jitter = SplitMix64::stream(cfg_.seed, fnv1a64(body.dump()));
  const std::string raw = post_with_retries(
      ep, "/v1/rouge", body.dump(), cfg_.timeout, {}, cfg_.retry, hooks_, jitter,
      [](const HttpOutcome& o) {
        throw Error(ErrorCode::SidecarUnavailable, "rouge request returned " + o.reason + ": " + o.body);
      },
      ErrorCode::SidecarUnavailable);
  const json doc = parse_body(raw, ErrorCode::ShapeError, "sidecar");
  auto v = doc.find("rougeL");
  if (v == doc.end() || !v->is_number()) throw Error(ErrorCode::ShapeError, "rouge response has no rougeL number");
  const double score = v->get<double>();
  if (std::isnan(score)) throw Error(ErrorCode::ShapeError, "rougeL is NaN");
  return std::clamp(score, 0.0, 1.0);
}

std::string question_key(std::string_view question) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(question)));
  return buf;
}

FixtureStore::FixtureStore(std::span<const GenerationRecord> records) {
  for (const GenerationRecord& rec : records) records_.insert_or_assign(question_key(rec.question), rec);
}

FixtureStore FixtureStore::load(const std::filesystem::path& corpus) {
  const auto records = load_corpus(corpus);
  return FixtureStore(records);
}

const GenerationRecord* FixtureStore::find(std::string_view question) const {
  auto it = records_.find(question_key(question));
  return it == records_.end() ? nullptr : &it->second;
}

RecordBuilder::RecordBuilder(GeneratorClient generator, SidecarClient sidecar)
    : generator_(std::move(generator)), sidecar_(std::move(sidecar)) {}

RecordBuilder::RecordBuilder(FixtureStore fixtures) : fixtures_(std::move(fixtures)) {}

GenerationRecord RecordBuilder::build(const QuestionSpec& spec) const {
  if (fixtures_) {
    const GenerationRecord* rec = fixtures_->find(spec.question);
    if (!rec) {
      throw Error(ErrorCode::FixtureNotFound, "no fixture for question key " + question_key(spec.question));
    }
    validate(*rec);
    return *rec;
  }

  GenerationRecord rec;
  rec.query_id = spec.query_id.empty() ? question_key(spec.question) : spec.query_id;
  rec.question = spec.question;
  rec.context = spec.context;
  rec.responses = generator_->sample_responses(spec.question, spec.context);

  std::vector<std::string> texts;
  texts.reserve(rec.responses.size());
  for (const Response& r : rec.responses) texts.push_back(r.text);
  rec.entailment_fwd = sidecar_->entailment_matrix(texts);

  if (spec.reference) {
    for (Response& r : rec.responses) {
      r.rouge_l = sidecar_->rouge_l(r.text, *spec.reference);
      r.correct = correctness_from_rouge_l(*r.rouge_l);
    }
  }
  validate(rec);
  return rec;
}

}  // namespace squq
