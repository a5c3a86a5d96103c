#include "tadascope/asm_features.hpp"

#include <algorithm>
#include <cstdio>

namespace tadascope {

const AugmentationTable& default_augmentation_table() {
  static const AugmentationTable table = [] {
    AugmentationTable t;
    const std::string eflags = "Can be used to read/write EFLAGS register";
    t.mnemonic_explanations = {
        {"pushf", eflags},
        {"pushfd", eflags},
        {"popf", eflags},
        {"popfd", eflags},
        {"pushfq", eflags},
        {"popfq", eflags},
        {"int", "CPU Interrupt"},
        {"icebp", "Tracing technique, Single Step Exception"},
        {"bts", "Set trap flag when number is exactly 8"},
        {"rdtsc", "Read time-stamp counter"},
        {"sidt", "Access Interupt Descriptor Table"},
        {"sldt", "Access Local Descriptor Table"},
        {"sgdt", "Access Global Descriptor Table"},
        {"str", "Store Task Register"},
        {"cpuid", "Processor information"},
    };
    const std::pair<std::uint32_t, const char*> fs[] = {
        {0x0, "Current Structured Exception Handling (SEH) frame"},
        {0x4, "Stack Base / Bottom of stack (high address)"},
        {0x8, "Stack Limit / Ceiling of stack (low address)"},
        {0xC, "SubSystemTib"},
        {0x10, "Fiber data"},
        {0x14, "Arbitrary data slot"},
        {0x18, "Linear address of TEB"},
        {0x1C, "Environment Pointer"},
        {0x20, "Process ID (in some Windows distributions this field is used as DebugContext)"},
        {0x24, "Current thread ID"},
        {0x28, "Active RPC Handle"},
        {0x2C, "Linear address of the thread-local storage array"},
        {0x30, "Linear address of Process Environment Block (PEB)"},
        {0x34, "Last error number"},
        {0x38, "Count of owned critical sections"},
        {0x3C, "Address of CSR Client Thread"},
        {0x40, "Win32 Thread Information"},
        {0x44, "Win32 client information (NT), user32 private data (Wine)"},
        {0xC0, "Pointer to FastSysCall in Wow64"},
        {0xC4, "Current Locale"},
        {0xC8, "FP Software Status Register"},
        {0xCC, "Reserved for OS (NT), kernel32 private data (Wine)"},
        {0x1A4, "Exception code"},
        {0x1A8, "Activation context stack"},
        {0x6E8, "Real Process ID"},
        {0x6EC, "Real Thread ID"},
    };
    for (const auto& [offset, text] : fs) t.segment_offsets[{x86::Segment::fs, offset}] = text;
    return t;
  }();
  return table;
}

std::string format_offset(std::uint32_t offset) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%Xh", offset);
  return buf;
}

namespace {

std::string interrupt_number(std::uint32_t n) {
  return n < 10 ? std::to_string(n) : format_offset(n);
}

}  // namespace

std::vector<Feature> scan_uncommon_mnemonics(const BasicBlock& block, const AugmentationTable& table) {
  std::vector<Feature> out;
  for (const auto& ins : block.instructions) {
    auto it = table.mnemonic_explanations.find(ins.mnemonic);
    if (it == table.mnemonic_explanations.end()) continue;
    std::string shown = ins.mnemonic;
    if (ins.mnemonic == "int" && !ins.operands.empty() && ins.operands[0].immediate_value) {
      shown += " " + interrupt_number(*ins.operands[0].immediate_value);
    }
    out.push_back({FeatureKind::UncommonIns, "Uncommon INS: " + shown + " (" + it->second + ")", block.id,
                   ins.address});
  }
  return out;
}

std::vector<Feature> scan_segment_access(const BasicBlock& block, const AugmentationTable& table) {
  std::vector<Feature> out;
  for (const auto& ins : block.instructions) {
    for (const auto& op : ins.operands) {
      if (!op.is_absolute_memory() || !op.segment_prefix) continue;
      x86::Segment seg = *op.segment_prefix;
      if (seg != x86::Segment::fs && seg != x86::Segment::gs) continue;
      auto offset = static_cast<std::uint32_t>(*op.displacement);
      auto it = table.segment_offsets.find({seg, offset});
      std::string explanation = it == table.segment_offsets.end() ? "unknown field" : it->second;
      out.push_back({FeatureKind::SegmentAccess,
                     "Segment Register Access: " + std::string(x86::name(seg)) + ":" + format_offset(offset) + " (" +
                         explanation + ")",
                     block.id, ins.address});
    }
  }
  return out;
}

std::vector<Feature> extract_asm_features(const BasicBlock& block, const AugmentationTable& table) {
  std::vector<Feature> out = scan_uncommon_mnemonics(block, table);
  auto seg = scan_segment_access(block, table);
  out.insert(out.end(), seg.begin(), seg.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const Feature& a, const Feature& b) { return a.source_address < b.source_address; });
  return out;
}

}  // namespace tadascope
