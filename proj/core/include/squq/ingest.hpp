#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "squq/core.hpp"

namespace squq {

// Corpus JSONL: one object per LF-terminated line.
//
//   {"query_id": str, "question": str, "context": str|null,
//    "responses": [{"text": str, "token_logprobs": [num<=0 | "-inf"],
//                   "correct": bool?, "gpt4_rating": num?, "rougeL": num?}],
//    "entailment_fwd": [[num in [0,1]]]}
//
// A missing `correct` is derived from gpt4_rating (> 0.7), else rougeL (> 0.3).

/// Parses and validates one record; `line` is used in error reports.
GenerationRecord parse_record(std::string_view json_line, std::size_t line = 0);
std::string serialize_record(const GenerationRecord& rec);

/// Throws ParseError, SchemaError or MatrixShapeMismatch with the 1-based line.
std::vector<GenerationRecord> read_corpus(std::istream& in);
std::vector<GenerationRecord> load_corpus(const std::filesystem::path& path);

void write_corpus(std::ostream& out, std::span<const GenerationRecord> records);
/// Writes atomically: temp file in the same directory, then rename.
void write_corpus(const std::filesystem::path& path, std::span<const GenerationRecord> records);

/// Writes `contents` to `path` through a temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

enum class SplitStrategy { by_query_hash, by_order };

struct SplitSpec {
  double calibration_fraction = 0.5;
  std::uint64_t seed = 0;
  SplitStrategy strategy = SplitStrategy::by_query_hash;
};

struct CorpusSplit {
  std::vector<GenerationRecord> calibration;
  std::vector<GenerationRecord> test;
};

/// floor(fraction * n) calibration records, clamped to [1, n-1].
std::size_t calibration_count(std::size_t n, double fraction);

/// Sort key for by_query_hash: mix64(fnv1a64(query_id) ^ mix64(seed)).
std::uint64_t split_key(std::string_view query_id, std::uint64_t seed) noexcept;

/// by_order keeps the first records for calibration; by_query_hash orders
/// records by split_key (input position breaks ties) and takes the first.
/// Both sides keep input order. Throws TooFewRecords below 2 records.
CorpusSplit split(std::vector<GenerationRecord> records, const SplitSpec& spec);

}  // namespace squq
