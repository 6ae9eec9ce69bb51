#include "squq/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "squq/error.hpp"
#include "squq/metrics.hpp"
#include "squq/random.hpp"

namespace squq {

namespace {

using nlohmann::json;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void schema_error(std::size_t line, const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::SchemaError, msg, line, field);
}

const json& require(const json& obj, const char* key, std::size_t line, const std::string& prefix = {}) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(line, prefix + key, "missing required field");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line, const std::string& prefix = {}) {
  const json& v = require(obj, key, line, prefix);
  if (!v.is_string()) schema_error(line, prefix + key, "expected a string");
  return v.get<std::string>();
}

std::optional<double> optional_unit(const json& obj, const char* key, std::size_t line, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) schema_error(line, prefix + key, "expected a number");
  const double v = it->get<double>();
  if (!(v >= 0.0 && v <= 1.0)) schema_error(line, prefix + key, "value " + std::to_string(v) + " outside [0,1]");
  return v;
}

Response parse_response(const json& j, std::size_t index, std::size_t line) {
  const std::string prefix = "responses[" + std::to_string(index) + "].";
  if (!j.is_object()) schema_error(line, "responses[" + std::to_string(index) + "]", "expected an object");
  Response r;
  r.index = index;
  r.text = require_string(j, "text", line, prefix);

  const json& lps = require(j, "token_logprobs", line, prefix);
  if (!lps.is_array()) schema_error(line, prefix + "token_logprobs", "expected an array");
  if (lps.empty()) schema_error(line, prefix + "token_logprobs", "token log-probs must be non-empty");
  r.token_logprobs.reserve(lps.size());
  for (const json& v : lps) {
    double lp;
    if (v.is_number()) {
      lp = v.get<double>();
    } else if (v.is_string() && v.get<std::string>() == "-inf") {
      lp = kNegInf;
    } else {
      schema_error(line, prefix + "token_logprobs", "expected numbers or \"-inf\"");
    }
    if (std::isnan(lp) || lp > 0.0) schema_error(line, prefix + "token_logprobs", "token log-prob must be <= 0");
    r.token_logprobs.push_back(lp);
  }

  if (auto it = j.find("correct"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) schema_error(line, prefix + "correct", "expected a boolean");
    r.correct = it->get<bool>();
  }
  r.gpt4_rating = optional_unit(j, "gpt4_rating", line, prefix);
  r.rouge_l = optional_unit(j, "rougeL", line, prefix);
  if (!r.correct) {
    if (r.gpt4_rating) r.correct = correctness_from_rating(*r.gpt4_rating);
    else if (r.rouge_l) r.correct = correctness_from_rouge_l(*r.rouge_l);
  }
  return r;
}

json logprob_json(double lp) {
  if (std::isinf(lp)) return "-inf";
  return lp;
}

}  // namespace

GenerationRecord parse_record(std::string_view json_line, std::size_t line) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what(), line);
  }
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "expected a JSON object", line);

  GenerationRecord rec;
  rec.query_id = require_string(j, "query_id", line);
  rec.question = require_string(j, "question", line);
  if (auto it = j.find("context"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error(line, "context", "expected a string or null");
    rec.context = it->get<std::string>();
  }

  const json& responses = require(j, "responses", line);
  if (!responses.is_array()) schema_error(line, "responses", "expected an array");
  if (responses.empty()) schema_error(line, "responses", "record needs at least one response");
  for (std::size_t i = 0; i < responses.size(); ++i) rec.responses.push_back(parse_response(responses[i], i, line));

  const json& matrix = require(j, "entailment_fwd", line);
  if (!matrix.is_array()) schema_error(line, "entailment_fwd", "expected an array of arrays");
  const std::size_t n = rec.responses.size();
  if (matrix.size() != n) {
    throw Error(ErrorCode::MatrixShapeMismatch,
                std::to_string(n) + " responses but " + std::to_string(matrix.size()) + " matrix rows", line,
                "entailment_fwd");
  }
  rec.entailment_fwd = SquareMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = matrix[i];
    const std::string field = "entailment_fwd[" + std::to_string(i) + "]";
    if (!row.is_array()) schema_error(line, field, "expected an array");
    if (row.size() != n) {
      throw Error(ErrorCode::MatrixShapeMismatch,
                  "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(n), line, field);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!row[k].is_number()) schema_error(line, field + "[" + std::to_string(k) + "]", "expected a number");
      rec.entailment_fwd(i, k) = row[k].get<double>();
    }
  }

  try {
    validate(rec);
  } catch (const Error& e) {
    // Re-raise with the line number attached.
    const std::string what = e.what();
    const auto colon = what.find(": ");
    throw Error(e.code(), colon == std::string::npos ? what : what.substr(colon + 2), line, e.field());
  }
  return rec;
}

std::string serialize_record(const GenerationRecord& rec) {
  json j;
  j["query_id"] = rec.query_id;
  j["question"] = rec.question;
  j["context"] = rec.context ? json(*rec.context) : json(nullptr);
  json responses = json::array();
  for (const Response& r : rec.responses) {
    json jr;
    jr["text"] = r.text;
    json lps = json::array();
    for (double lp : r.token_logprobs) lps.push_back(logprob_json(lp));
    jr["token_logprobs"] = std::move(lps);
    if (r.correct) jr["correct"] = *r.correct;
    if (r.gpt4_rating) jr["gpt4_rating"] = *r.gpt4_rating;
    if (r.rouge_l) jr["rougeL"] = *r.rouge_l;
    responses.push_back(std::move(jr));
  }
  j["responses"] = std::move(responses);
  j["entailment_fwd"] = rec.entailment_fwd.rows();
  return j.dump();
}

std::vector<GenerationRecord> read_corpus(std::istream& in) {
  std::vector<GenerationRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_record(text, line));
  }
  return out;
}

std::vector<GenerationRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const GenerationRecord> records) {
  for (const GenerationRecord& rec : records) out << serialize_record(rec) << '\n';
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(parent, ec);
  const fs::path tmp = parent / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

void write_corpus(const std::filesystem::path& path, std::span<const GenerationRecord> records) {
  std::ostringstream buf;
  write_corpus(buf, records);
  write_file_atomic(path, buf.str());
}

std::size_t calibration_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "calibration fraction must lie in (0, 1)");
  }
  if (n < 2) throw Error(ErrorCode::TooFewRecords, "need at least 2 records to split");
  // Slack keeps decimal fractions such as 0.29 * 100 from flooring to 28.
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

std::uint64_t split_key(std::string_view query_id, std::uint64_t seed) noexcept {
  return mix64(fnv1a64(query_id) ^ mix64(seed));
}

CorpusSplit split(std::vector<GenerationRecord> records, const SplitSpec& spec) {
  const std::size_t n = records.size();
  const std::size_t k = calibration_count(n, spec.calibration_fraction);

  std::vector<bool> to_calibration(n, false);
  if (spec.strategy == SplitStrategy::by_order) {
    for (std::size_t i = 0; i < k; ++i) to_calibration[i] = true;
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> key(n);
    for (std::size_t i = 0; i < n; ++i) key[i] = split_key(records[i].query_id, spec.seed);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    for (std::size_t i = 0; i < k; ++i) to_calibration[order[i]] = true;
  }

  CorpusSplit out;
  out.calibration.reserve(k);
  out.test.reserve(n - k);
  for (std::size_t i = 0; i < n; ++i) {
    (to_calibration[i] ? out.calibration : out.test).push_back(std::move(records[i]));
  }
  return out;
}

}  // namespace squq
