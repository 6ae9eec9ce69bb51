#pragma once

// In-process HTTP stand-ins for the completion endpoint and the scoring
// sidecar. Each binds to an ephemeral localhost port.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace squq::testing {

class StubServer {
 public:
  StubServer() = default;
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;
  ~StubServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// Completion endpoint that answers with fixed text and token log-probs after
/// replaying a scripted list of failure statuses.
class StubGenerator {
 public:
  std::vector<int> failures;  // statuses returned before the first success
  std::string text = "Paris";
  std::vector<double> token_logprobs = {-0.1};
  bool omit_logprobs = false;
  int success_status = 200;

  StubGenerator() {
    stub_.server().Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t call;
      {
        std::lock_guard lock(mu_);
        call = times_.size();
        times_.push_back(std::chrono::steady_clock::now());
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      if (call < failures.size()) {
        res.status = failures[call];
        res.set_content(R"({"error":"scripted"})", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const std::size_t n = body.value("n", 1);
      nlohmann::json choices = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i) {
        nlohmann::json c{{"index", i}, {"text", text}};
        if (!omit_logprobs) c["logprobs"] = {{"token_logprobs", token_logprobs}};
        choices.push_back(c);
      }
      res.status = success_status;
      res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    stub_.start();
  }

  std::string url() const { return stub_.url(); }
  std::size_t requests() const {
    std::lock_guard lock(mu_);
    return times_.size();
  }
  std::vector<std::chrono::steady_clock::time_point> times() const {
    std::lock_guard lock(mu_);
    return times_;
  }
  std::vector<std::string> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::chrono::steady_clock::time_point> times_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_;
  StubServer stub_;
};

/// Deterministic scoring sidecar: p(a |- b) = 1 for equal texts, otherwise
/// `off_diagonal` unless `score` is set. RougeL by token LCS F-measure.
class StubSidecar {
 public:
  double off_diagonal = 0.5;
  std::function<double(const std::string&, const std::string&)> score;
  /// Override the returned shape (0: honest).
  std::size_t force_rows = 0;
  std::size_t force_cols = 0;
  std::vector<int> failures;

  StubSidecar() {
    stub_.server().Post("/v1/entailment/matrix", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t call;
      {
        std::lock_guard lock(mu_);
        call = matrix_calls_++;
        sizes_.push_back(0);
      }
      if (call < failures.size()) {
        res.status = failures[call];
        return;
      }
      const auto texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
      {
        std::lock_guard lock(mu_);
        sizes_.back() = texts.size();
      }
      const std::size_t rows = force_rows ? force_rows : texts.size();
      const std::size_t cols = force_cols ? force_cols : texts.size();
      std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          m[i][j] = i == j ? 1.0 : entail(texts[i % texts.size()], texts[j % texts.size()]);
      res.set_content(nlohmann::json{{"matrix", m}}.dump(), "application/json");
    });
    stub_.server().Post("/v1/rouge", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      res.set_content(nlohmann::json{{"rougeL", rouge_l(body.at("candidate"), body.at("reference"))}}.dump(),
                      "application/json");
    });
    stub_.server().Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","model_name":"stub","stub":true})", "application/json");
    });
    stub_.start();
  }

  std::string url() const { return stub_.url(); }
  std::vector<std::size_t> request_sizes() const {
    std::lock_guard lock(mu_);
    return sizes_;
  }

  static double rouge_l(const std::string& candidate, const std::string& reference) {
    auto tokens = [](const std::string& s) {
      std::vector<std::string> out;
      std::string cur;
      for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
          if (!cur.empty()) out.push_back(cur);
          cur.clear();
        } else {
          cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
      }
      if (!cur.empty()) out.push_back(cur);
      return out;
    };
    const auto a = tokens(candidate), b = tokens(reference);
    if (a.empty() || b.empty()) return 0.0;
    std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
      for (std::size_t j = 1; j <= b.size(); ++j)
        dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    const double lcs = static_cast<double>(dp[a.size()][b.size()]);
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(a.size()), r = lcs / static_cast<double>(b.size());
    return 2.0 * p * r / (p + r);
  }

 private:
  double entail(const std::string& a, const std::string& b) const {
    if (score) return score(a, b);
    return a == b ? 1.0 : off_diagonal;
  }

  mutable std::mutex mu_;
  std::size_t matrix_calls_ = 0;
  std::vector<std::size_t> sizes_;
  StubServer stub_;
};

}  // namespace squq::testing
