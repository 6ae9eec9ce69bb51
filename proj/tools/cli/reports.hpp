#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "squq/clustering.hpp"
#include "squq/conformal.hpp"
#include "squq/uq.hpp"

namespace squq::cli {

using nlohmann::json;

/// Infinite values are written as the strings "inf" / "-inf".
json number_or_inf(double v);
double read_number_or_inf(const json& v, const std::string& field);

struct ModelFile {
  CalibrationModel model;
  std::optional<double> alpha;
  std::optional<Variant> variant;
};

json model_to_json(const CalibrationModel& model, bool include_scores, double alpha, Variant variant);
ModelFile model_from_json(const json& j);
ModelFile load_model(const std::filesystem::path& path);

json assignments_to_json(const std::string& query_id, const ClusterSet& cs);
json uq_to_json(const UqScore& score);
json prediction_to_json(const PredictionSet& set);
PredictionSet prediction_from_json(const json& j, std::size_t line);

/// Reads a JSONL file into objects; throws ParseError with line numbers.
std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);

}  // namespace squq::cli
