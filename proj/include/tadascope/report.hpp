#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tadascope/api_features.hpp"
#include "tadascope/error.hpp"
#include "tadascope/packing.hpp"
#include "tadascope/rating.hpp"
#include "tadascope/string_features.hpp"

namespace tadascope {

inline constexpr std::string_view kReportSchema = "tadascope.report/1";

struct AnalysisConfig {
  PackerHeuristicConfig packer;
  EmulationTriggerConfig emulation;
  RatingConfig rating;
  bool force_fixture = false;                 // otherwise chosen by the ".fixture" extension
  const ApiKnowledgeBase* api_db = nullptr;   // builtin when null
  RatingBackend* backend = nullptr;           // local rule rater when null
  RatingCache* cache = nullptr;
  std::optional<std::filesystem::path> dump_prompts_dir;
  std::size_t extraction_threads = 0;         // 0: hardware concurrency
};

enum class ReportStatus { Ok, Packed, Error };
std::string_view to_string(ReportStatus status);

struct ReportRecord {
  Address block = 0;
  Address function = 0;
  std::vector<Feature> features;  // prompt order
  int rating = 0;
  bool positive = false;
  std::string prompt_sha256;
};

struct ReportFailure {
  std::string stage;  // load | disassembly | rating | output
  ErrorCode code = ErrorCode::Io;
  std::string message;
};

struct Report {
  std::string input_name;
  std::string input_digest;  // sha256 of the input file
  std::optional<FormatKind> format;
  ReportStatus status = ReportStatus::Ok;
  std::optional<ReportFailure> failure;
  PackingAssessment packing;
  std::string backend_id;
  int threshold = 7;
  std::size_t total_functions = 0;
  std::size_t total_blocks = 0;
  std::size_t decode_errors = 0;
  std::size_t emulation_budget_hits = 0;
  std::vector<ReportRecord> records;  // blocks with at least one feature, by (block, function)
  std::vector<Address> positives;     // ascending, unique
};

/// Never throws for analysis failures; they are reported through status and failure.
Report analyze(const std::filesystem::path& path, const AnalysisConfig& config);

/// Runs everything after loading. Rating errors surface as a failure report.
Report analyze_image(const BinaryImage& image, const AnalysisConfig& config, std::string input_name = {},
                     std::string input_digest = {});

enum class ReportFormat { Json, Text };

std::string emit_report(const Report& report, ReportFormat format);

std::string hex_address(Address a);  // "0x00401000"

}  // namespace tadascope
