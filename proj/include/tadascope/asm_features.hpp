#pragma once

#include <map>
#include <string>
#include <utility>

#include "tadascope/feature.hpp"

namespace tadascope {

struct AugmentationTable {
  std::map<std::string, std::string> mnemonic_explanations;
  std::map<std::pair<x86::Segment, std::uint32_t>, std::string> segment_offsets;
};

/// The 15 uncommon mnemonics and 26 fs offsets with their explanation text.
const AugmentationTable& default_augmentation_table();

std::vector<Feature> scan_uncommon_mnemonics(const BasicBlock& block,
                                             const AugmentationTable& table = default_augmentation_table());
std::vector<Feature> scan_segment_access(const BasicBlock& block,
                                         const AugmentationTable& table = default_augmentation_table());

/// Both scans merged in instruction address order.
std::vector<Feature> extract_asm_features(const BasicBlock& block,
                                          const AugmentationTable& table = default_augmentation_table());

/// "30h", "1A4h", "0h".
std::string format_offset(std::uint32_t offset);

}  // namespace tadascope
