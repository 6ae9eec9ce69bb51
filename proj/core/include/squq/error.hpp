#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace squq {

enum class ErrorCode {
  EmptyTokenList,
  EmptyList,
  NonFiniteScore,
  IndexOutOfRange,
  EmptyCluster,
  NonPositiveAlpha,
  MatrixShapeMismatch,
  MissingLabels,
  EpsilonOutOfRange,
  ShapeMismatch,
  DegenerateLabels,
  OutOfRange,
  InvalidConfig,
  ParseError,
  SchemaError,
  TooFewRecords,
  IoError,
  AuthError,
  EndpointError,
  MissingLogprobs,
  SidecarUnavailable,
  ShapeError,
  FixtureNotFound,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. `line` is the 1-based input line for
/// corpus errors, `field` the offending JSON field when known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt, std::string field = {});

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string field_;
};

}  // namespace squq
