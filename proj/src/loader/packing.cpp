#include "tadascope/packing.hpp"

#include <stdexcept>

namespace tadascope {

std::string_view to_string(PackingVerdict verdict) {
  switch (verdict) {
    case PackingVerdict::NotPacked: return "NotPacked";
    case PackingVerdict::HeuristicPacked: return "HeuristicPacked";
    case PackingVerdict::KnownPacker: return "KnownPacker";
  }
  return "NotPacked";
}

PackingAssessment detect_packing(const BinaryImage& image, const PackerHeuristicConfig& config) {
  if (config.min_libraries < 1 || config.min_functions < 1) {
    throw std::invalid_argument("packer heuristic thresholds must be >= 1");
  }
  PackingAssessment result;
  result.library_count = image.imports().library_count();
  result.function_count = image.imports().size();

  for (const auto& section : image.sections()) {
    for (const auto& known : config.known_packer_sections) {
      if (section.name == known.section_name) {
        result.verdict = PackingVerdict::KnownPacker;
        result.packer_name = known.packer_name;
        return result;
      }
    }
  }
  if (result.library_count < config.min_libraries || result.function_count < config.min_functions) {
    result.verdict = PackingVerdict::HeuristicPacked;
  }
  return result;
}

}  // namespace tadascope
