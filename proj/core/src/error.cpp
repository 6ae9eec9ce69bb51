#include "squq/error.hpp"

namespace squq {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyTokenList: return "EmptyTokenList";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::NonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorCode::MatrixShapeMismatch: return "MatrixShapeMismatch";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::EpsilonOutOfRange: return "EpsilonOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::MissingLogprobs: return "MissingLogprobs";
    case ErrorCode::SidecarUnavailable: return "SidecarUnavailable";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::FixtureNotFound: return "FixtureNotFound";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> line, const std::string& field) {
  std::string out(to_string(code));
  if (line) out += " (line " + std::to_string(*line) + ")";
  if (!field.empty()) out += " [" + field + "]";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line, std::string field)
    : std::runtime_error(decorate(code, message, line, field)),
      code_(code),
      line_(line),
      field_(std::move(field)) {}

}  // namespace squq
