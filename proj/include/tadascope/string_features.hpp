#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tadascope/feature.hpp"

namespace tadascope {

struct EmulationTriggerConfig {
  std::size_t min_consecutive_movs = 6;
  std::size_t min_string_length = 4;
  std::size_t max_steps = 100000;

  /// Throws std::invalid_argument when any field is zero.
  void validate() const;
};

enum class StringEncoding { Ascii, Utf16le };
enum class StringOrigin { Plain, Emulated };

struct RecoveredString {
  std::string value;
  StringEncoding encoding = StringEncoding::Ascii;
  StringOrigin origin = StringOrigin::Plain;
  BlockId attributed_block;
  Address address = 0;  // where the string lives in memory

  bool operator==(const RecoveredString&) const = default;
};

inline constexpr std::size_t kMaxStringChars = 512;

/// Reads a NUL-terminated printable string of the given encoding at va, staying inside mapped memory.
std::optional<std::string> read_string(const BinaryImage& image, Address va, StringEncoding encoding,
                                       std::size_t min_length);
/// Tries UTF-16LE first when the layout fits it, then ASCII.
std::optional<RecoveredString> read_any_string(const BinaryImage& image, Address va, std::size_t min_length);

std::string render_string_feature(std::string_view value);

std::vector<Feature> extract_plain_strings(const BasicBlock& block, const BinaryImage& image,
                                           const EmulationTriggerConfig& config = {});

enum class EmulationReason { No, SingleBlockLoop, ConsecutiveMovs };
std::string_view to_string(EmulationReason reason);

struct EmulationDecision {
  bool emulate = false;
  EmulationReason reason = EmulationReason::No;
};

EmulationDecision should_emulate(const ControlFlowGraph& cfg, const BinaryImage& image,
                                 const EmulationTriggerConfig& config = {});

struct EmulationResult {
  std::vector<RecoveredString> strings;  // ordered by memory address
  bool budget_exceeded = false;
  std::size_t steps = 0;
};

EmulationResult emulate_for_strings(const ControlFlowGraph& cfg, const BinaryImage& image,
                                    const EmulationTriggerConfig& config = {});

/// Plain strings for every block plus emulated strings when triggered; keyed by block start.
struct FunctionStrings {
  std::map<Address, std::vector<Feature>> by_block;
  EmulationDecision decision;
  bool budget_exceeded = false;
};

FunctionStrings extract_string_features(const ControlFlowGraph& cfg, const BinaryImage& image,
                                        const EmulationTriggerConfig& config = {});

}  // namespace tadascope
