#include "cli/reports.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "squq/error.hpp"

namespace squq::cli {

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number_or_inf(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorCode::SchemaError, "expected a number or \"inf\"", std::nullopt, field);
}

json model_to_json(const CalibrationModel& model, bool include_scores, double alpha, Variant variant) {
  json j;
  j["epsilon"] = model.epsilon();
  j["n_scores"] = model.n_scores();
  j["threshold"] = number_or_inf(model.threshold());
  j["alpha"] = alpha;
  j["variant"] = std::string(to_string(variant));
  if (include_scores) {
    json scores = json::array();
    for (double s : model.scores()) scores.push_back(number_or_inf(s));
    j["scores"] = std::move(scores);
  }
  return j;
}

ModelFile model_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "calibration model must be a JSON object");
  for (const char* key : {"epsilon", "n_scores", "threshold"}) {
    if (!j.contains(key)) throw Error(ErrorCode::SchemaError, "missing required field", std::nullopt, key);
  }
  if (!j["epsilon"].is_number()) throw Error(ErrorCode::SchemaError, "expected a number", std::nullopt, "epsilon");
  if (!j["n_scores"].is_number_unsigned()) {
    throw Error(ErrorCode::SchemaError, "expected a non-negative integer", std::nullopt, "n_scores");
  }
  std::vector<double> scores;
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::SchemaError, "expected an array", std::nullopt, "scores");
    for (const json& s : *it) scores.push_back(read_number_or_inf(s, "scores"));
  }
  ModelFile mf{CalibrationModel::restore(j["epsilon"].get<double>(), j["n_scores"].get<std::size_t>(),
                                         read_number_or_inf(j["threshold"], "threshold"), std::move(scores)),
               std::nullopt, std::nullopt};
  if (auto it = j.find("alpha"); it != j.end() && it->is_number()) mf.alpha = it->get<double>();
  if (auto it = j.find("variant"); it != j.end() && it->is_string()) {
    mf.variant = parse_variant(it->get<std::string>());
    if (!mf.variant) throw Error(ErrorCode::SchemaError, "unknown variant", std::nullopt, "variant");
  }
  return mf;
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

json assignments_to_json(const std::string& query_id, const ClusterSet& cs) {
  return json{{"query_id", query_id}, {"assignments", cs.assignments()}};
}

json uq_to_json(const UqScore& score) {
  return json{{"query_id", score.query_id},
              {"semantic_entropy", score.semantic_entropy},
              {"n_clusters", score.n_clusters},
              {"variant", std::string(to_string(score.variant))}};
}

json prediction_to_json(const PredictionSet& set) {
  json entries = json::array();
  for (const PredictionEntry& e : set.entries) {
    entries.push_back(json{{"cluster_id", e.cluster_id},
                           {"response_index", e.response_index},
                           {"text", e.text},
                           {"score", number_or_inf(e.score)}});
  }
  return json{{"query_id", set.query_id}, {"tau", number_or_inf(set.tau)}, {"set", std::move(entries)}};
}

PredictionSet prediction_from_json(const json& j, std::size_t line) {
  auto fail = [&](const std::string& field, const std::string& msg) -> PredictionSet {
    throw Error(ErrorCode::SchemaError, msg, line, field);
  };
  if (!j.is_object()) return fail("", "expected an object");
  if (!j.contains("query_id") || !j["query_id"].is_string()) return fail("query_id", "expected a string");
  if (!j.contains("tau")) return fail("tau", "missing required field");
  if (!j.contains("set") || !j["set"].is_array()) return fail("set", "expected an array");
  PredictionSet out;
  out.query_id = j["query_id"].get<std::string>();
  out.tau = read_number_or_inf(j["tau"], "tau");
  for (const json& e : j["set"]) {
    if (!e.is_object() || !e.contains("cluster_id") || !e.contains("response_index") || !e.contains("score")) {
      return fail("set", "entries need cluster_id, response_index and score");
    }
    out.entries.push_back(PredictionEntry{e["cluster_id"].get<std::size_t>(), e["response_index"].get<std::size_t>(),
                                          e.value("text", std::string{}), read_number_or_inf(e["score"], "set.score")});
  }
  return out;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<json> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(text));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, e.what(), line);
    }
  }
  return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const json& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

}  // namespace squq::cli
