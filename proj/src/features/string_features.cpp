#include "tadascope/string_features.hpp"

#include <set>
#include <stdexcept>

#include "tadascope/emulator.hpp"

namespace tadascope {

namespace {

bool printable(std::uint32_t c) { return c >= 0x20 && c <= 0x7E; }

bool is_segmented(const x86::Operand& op) {
  return op.segment_prefix && (*op.segment_prefix == x86::Segment::fs || *op.segment_prefix == x86::Segment::gs);
}

bool is_stack_base(x86::Reg r) { return r == x86::Reg::esp || r == x86::Reg::ebp; }

// A mov that fits the stack-string setup pattern: a stack store of an immediate or register,
// or a load from a static data address.
bool is_stack_setup_mov(const x86::Instruction& ins, const BinaryImage& image) {
  if (ins.mnemonic != "mov" || ins.operands.size() != 2) return false;
  const auto& dst = ins.operands[0];
  const auto& src = ins.operands[1];
  if (dst.kind == x86::OperandKind::Memory && is_stack_base(dst.base) && !is_segmented(dst)) {
    return src.kind == x86::OperandKind::Immediate || src.kind == x86::OperandKind::Register;
  }
  if (dst.kind == x86::OperandKind::Register && src.is_absolute_memory() && !is_segmented(src)) {
    auto va = static_cast<Address>(*src.displacement);
    return image.is_mapped(va) && !image.is_executable(va);
  }
  return false;
}

}  // namespace

void EmulationTriggerConfig::validate() const {
  if (min_consecutive_movs < 1 || min_string_length < 1 || max_steps < 1) {
    throw std::invalid_argument("emulation trigger config values must be >= 1");
  }
}

std::string_view to_string(EmulationReason reason) {
  switch (reason) {
    case EmulationReason::No: return "No";
    case EmulationReason::SingleBlockLoop: return "SingleBlockLoop";
    case EmulationReason::ConsecutiveMovs: return "ConsecutiveMovs";
  }
  return "?";
}

std::optional<std::string> read_string(const BinaryImage& image, Address va, StringEncoding encoding,
                                       std::size_t min_length) {
  std::string out;
  const std::uint32_t width = encoding == StringEncoding::Ascii ? 1 : 2;
  for (std::size_t i = 0; i <= kMaxStringChars; ++i) {
    Address at = va + static_cast<Address>(i * width);
    if (at < va) return std::nullopt;
    auto lo = image.byte_at(at);
    if (!lo) return std::nullopt;
    std::uint32_t c = *lo;
    if (width == 2) {
      auto hi = image.byte_at(at + 1);
      if (!hi) return std::nullopt;
      c |= std::uint32_t{*hi} << 8;
    }
    if (c == 0) {
      if (out.size() < min_length) return std::nullopt;
      return out;
    }
    if (!printable(c)) return std::nullopt;
    out += static_cast<char>(c);
  }
  return std::nullopt;
}

std::optional<RecoveredString> read_any_string(const BinaryImage& image, Address va, std::size_t min_length) {
  for (auto encoding : {StringEncoding::Utf16le, StringEncoding::Ascii}) {
    if (auto s = read_string(image, va, encoding, min_length)) {
      RecoveredString r;
      r.value = std::move(*s);
      r.encoding = encoding;
      r.origin = StringOrigin::Plain;
      r.address = va;
      return r;
    }
  }
  return std::nullopt;
}

std::string render_string_feature(std::string_view value) { return "String Reference: " + quote(value); }

std::vector<Feature> extract_plain_strings(const BasicBlock& block, const BinaryImage& image,
                                           const EmulationTriggerConfig& config) {
  std::vector<Feature> out;
  std::set<std::string> seen;
  for (const auto& ins : block.instructions) {
    if (ins.transfers_control()) continue;
    for (const auto& op : ins.operands) {
      std::optional<Address> candidate;
      if (op.kind == x86::OperandKind::Immediate) {
        candidate = op.immediate_value;
      } else if (op.kind == x86::OperandKind::Memory && op.displacement && !is_segmented(op)) {
        candidate = static_cast<Address>(*op.displacement);
      }
      if (!candidate || !image.is_mapped(*candidate)) continue;
      auto s = read_any_string(image, *candidate, config.min_string_length);
      if (!s) continue;
      std::string text = render_string_feature(s->value);
      if (!seen.insert(text).second) continue;
      out.push_back({FeatureKind::StringRef, std::move(text), block.id, ins.address});
    }
  }
  return out;
}

EmulationDecision should_emulate(const ControlFlowGraph& cfg, const BinaryImage& image,
                                 const EmulationTriggerConfig& config) {
  if (!has_single_block_loop(cfg).empty()) return {true, EmulationReason::SingleBlockLoop};
  for (const auto& [start, block] : cfg.blocks()) {
    std::size_t run = 0;
    for (const auto& ins : block.instructions) {
      run = is_stack_setup_mov(ins, image) ? run + 1 : 0;
      if (run >= config.min_consecutive_movs) return {true, EmulationReason::ConsecutiveMovs};
    }
  }
  return {};
}

EmulationResult emulate_for_strings(const ControlFlowGraph& cfg, const BinaryImage& image,
                                    const EmulationTriggerConfig& config) {
  Emulator emulator(image, cfg, Emulator::Config{config.max_steps, Emulator::Config{}.stack_top});
  EmulationResult result;
  result.budget_exceeded = emulator.run() == Emulator::Halt::StepLimit;
  result.steps = emulator.steps();

  const auto& written = emulator.written();
  // Collect maximal runs of contiguous written addresses.
  std::vector<std::vector<std::pair<Address, Emulator::WrittenByte>>> regions;
  for (const auto& [va, byte] : written) {
    if (regions.empty() || regions.back().back().first + 1 != va) regions.emplace_back();
    regions.back().emplace_back(va, byte);
  }

  auto attribute = [&](const auto& region, std::size_t from, std::size_t to) {
    const Emulator::WrittenByte* last = &region[from].second;
    for (std::size_t k = from; k < to; ++k) {
      if (region[k].second.sequence > last->sequence) last = &region[k].second;
    }
    const BasicBlock* block = cfg.block_containing(last->writer);
    return block != nullptr ? block->id : BlockId{cfg.function_entry(), last->writer};
  };

  for (const auto& region : regions) {
    std::size_t i = 0;
    while (i < region.size()) {
      std::size_t wide = 0;
      while (i + 2 * wide + 1 < region.size() && printable(region[i + 2 * wide].second.value) &&
             region[i + 2 * wide + 1].second.value == 0 && wide < kMaxStringChars) {
        ++wide;
      }
      if (wide >= config.min_string_length) {
        RecoveredString s;
        for (std::size_t k = 0; k < wide; ++k) s.value += static_cast<char>(region[i + 2 * k].second.value);
        s.encoding = StringEncoding::Utf16le;
        s.origin = StringOrigin::Emulated;
        s.address = region[i].first;
        s.attributed_block = attribute(region, i, i + 2 * wide);
        result.strings.push_back(std::move(s));
        i += 2 * wide;
        continue;
      }
      std::size_t narrow = 0;
      while (i + narrow < region.size() && printable(region[i + narrow].second.value)) ++narrow;
      if (narrow >= config.min_string_length) {
        RecoveredString s;
        for (std::size_t k = 0; k < narrow; ++k) s.value += static_cast<char>(region[i + k].second.value);
        s.encoding = StringEncoding::Ascii;
        s.origin = StringOrigin::Emulated;
        s.address = region[i].first;
        s.attributed_block = attribute(region, i, i + narrow);
        result.strings.push_back(std::move(s));
        i += narrow;
        continue;
      }
      ++i;
    }
  }
  return result;
}

FunctionStrings extract_string_features(const ControlFlowGraph& cfg, const BinaryImage& image,
                                        const EmulationTriggerConfig& config) {
  FunctionStrings out;
  std::map<Address, std::set<std::string>> seen;
  for (const auto& [start, block] : cfg.blocks()) {
    auto features = extract_plain_strings(block, image, config);
    for (const auto& f : features) seen[start].insert(f.text);
    if (!features.empty()) out.by_block[start] = std::move(features);
  }
  out.decision = should_emulate(cfg, image, config);
  if (!out.decision.emulate) return out;
  auto emulated = emulate_for_strings(cfg, image, config);
  out.budget_exceeded = emulated.budget_exceeded;
  for (const auto& s : emulated.strings) {
    const BasicBlock* block = cfg.block_at(s.attributed_block.start);
    if (block == nullptr) continue;
    std::string text = render_string_feature(s.value);
    if (!seen[block->start()].insert(text).second) continue;
    // Anchor the feature at the last instruction of the block that wrote to memory.
    Address source = block->start();
    for (const auto& ins : block->instructions) {
      if (!ins.operands.empty() && ins.operands[0].kind == x86::OperandKind::Memory) source = ins.address;
    }
    out.by_block[block->start()].push_back({FeatureKind::StringRef, std::move(text), block->id, source});
  }
  return out;
}

}  // namespace tadascope
