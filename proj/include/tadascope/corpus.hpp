#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tadascope/report.hpp"

namespace tadascope {

enum class Tactic { DebuggerEvasion, SandboxEvasion, VMEvasion, AnalysisToolEvasion };
enum class ImplementationKind { Assembly, DirectAPI, IndirectAPI };

std::string_view to_string(Tactic tactic);
std::string_view to_string(ImplementationKind kind);

struct AddressRange {
  Address start = 0;
  Address end = 0;  // exclusive

  bool contains(Address a) const { return a >= start && a < end; }
};

struct GroundTruthEntry {
  std::string id;
  Tactic tactic = Tactic::DebuggerEvasion;
  ImplementationKind kind = ImplementationKind::Assembly;
  bool involves_string = false;
  std::vector<AddressRange> ranges;
  std::size_t binary_index = 0;
};

struct CorpusBinary {
  std::filesystem::path path;
  bool fixture = false;
};

struct CorpusManifest {
  std::vector<CorpusBinary> binaries;
  std::vector<GroundTruthEntry> implementations;
};

/// Line grammar:
///   binary <path> [fixture|pe]
///   impl <id> <tactic> <kind> <string|nostring> <start>-<end> [<start>-<end> ...]
/// Paths are relative to base_dir. Throws Error(ManifestError) with a line number.
CorpusManifest parse_corpus_manifest(std::string_view text, const std::filesystem::path& base_dir);
CorpusManifest load_corpus_manifest(const std::filesystem::path& path);

struct DetectionRate {
  std::size_t detected = 0;
  std::size_t total = 0;

  /// Percentage rounded to two decimals; 0 when total is 0.
  double rate_percent() const;
};

struct ImplementationOutcome {
  std::string id;
  bool detected = false;
};

struct BinaryOutcome {
  std::string path;
  ReportStatus status = ReportStatus::Ok;
  std::size_t total_blocks = 0;
  std::size_t positives = 0;
};

struct CorpusStats {
  std::map<Tactic, DetectionRate> by_tactic;
  std::map<ImplementationKind, DetectionRate> by_kind;
  DetectionRate with_string;
  DetectionRate without_string;
  DetectionRate overall;
  std::size_t unattributed_positives = 0;  // positives outside every range, in binaries with ground truth
  std::size_t benign_positives = 0;        // positives in binaries without ground truth
  std::vector<ImplementationOutcome> implementations;
  std::vector<BinaryOutcome> binaries;
};

/// Applies the detection rule: an implementation is detected iff a positive block start lies in one of its ranges.
CorpusStats aggregate(const CorpusManifest& manifest, const std::vector<std::vector<Address>>& positives_per_binary);

CorpusStats evaluate_corpus(const CorpusManifest& manifest, const AnalysisConfig& config);

std::string emit_corpus_stats(const CorpusStats& stats, ReportFormat format);

}  // namespace tadascope
