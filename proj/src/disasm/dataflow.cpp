#include "tadascope/dataflow.hpp"

#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace tadascope {

namespace {

using x86::OperandKind;
using x86::Reg;

constexpr std::uint8_t kEax = 1 << 0, kEcx = 1 << 1, kEdx = 1 << 2, kEbx = 1 << 3, kEsp = 1 << 4, kEbp = 1 << 5,
                       kEsi = 1 << 6, kEdi = 1 << 7, kAll = 0xFF;

const std::unordered_map<std::string_view, std::uint8_t>& implicit_writes() {
  static const std::unordered_map<std::string_view, std::uint8_t> table = {
      {"cpuid", kEax | kEbx | kEcx | kEdx},
      {"rdtsc", kEax | kEdx},
      {"rdtscp", kEax | kEcx | kEdx},
      {"rdmsr", kEax | kEdx},
      {"rdpmc", kEax | kEdx},
      {"xgetbv", kEax | kEdx},
      {"mul", kEax | kEdx},
      {"div", kEax | kEdx},
      {"idiv", kEax | kEdx},
      {"cdq", kEdx},
      {"cwd", kEdx},
      {"cwde", kEax},
      {"cbw", kEax},
      {"lahf", kEax},
      {"salc", kEax},
      {"aaa", kEax},
      {"aas", kEax},
      {"daa", kEax},
      {"das", kEax},
      {"aam", kEax},
      {"aad", kEax},
      {"xlatb", kEax},
      {"in", kEax},
      {"insb", kEdi | kEcx},
      {"insw", kEdi | kEcx},
      {"insd", kEdi | kEcx},
      {"outsb", kEsi | kEcx},
      {"outsw", kEsi | kEcx},
      {"outsd", kEsi | kEcx},
      {"lodsb", kEax | kEsi | kEcx},
      {"lodsw", kEax | kEsi | kEcx},
      {"lodsd", kEax | kEsi | kEcx},
      {"stosb", kEdi | kEcx},
      {"stosw", kEdi | kEcx},
      {"stosd", kEdi | kEcx},
      {"movsb", kEsi | kEdi | kEcx},
      {"movsw", kEsi | kEdi | kEcx},
      {"movsd", kEsi | kEdi | kEcx},
      {"cmpsb", kEsi | kEdi | kEcx},
      {"cmpsw", kEsi | kEdi | kEcx},
      {"cmpsd", kEsi | kEdi | kEcx},
      {"scasb", kEdi | kEcx},
      {"scasw", kEdi | kEcx},
      {"scasd", kEdi | kEcx},
      {"push", kEsp},
      {"pop", kEsp},
      {"pushad", kEsp},
      {"pusha", kEsp},
      {"pushfd", kEsp},
      {"pushf", kEsp},
      {"popfd", kEsp},
      {"popf", kEsp},
      {"popad", kAll},
      {"popa", kAll},
      {"call", kEax | kEcx | kEdx | kEsp},
      {"ret", kEsp},
      {"retf", kEsp},
      {"iretd", kEsp},
      {"leave", kEsp | kEbp},
      {"enter", kEsp | kEbp},
      {"loop", kEcx},
      {"loope", kEcx},
      {"loopne", kEcx},
      {"cmpxchg", kEax},
      {"cmpxchg8b", kEax | kEdx},
      {"int", kEax | kEcx | kEdx},
      {"into", kEax | kEcx | kEdx},
      {"syscall", kAll},
      {"sysenter", kAll},
  };
  return table;
}

const std::unordered_set<std::string_view>& non_writing() {
  static const std::unordered_set<std::string_view> set = {
      "cmp", "test", "push", "bt", "out", "jmp", "call", "nop", "verr", "verw", "lldt", "ltr",
      "lgdt", "lidt", "lmsw", "invlpg", "prefetch", "jecxz", "loop", "loope", "loopne", "ret", "retf",
      "int", "enter", "bound", "arpl", "clflush", "fxsave", "fxrstor", "ldmxcsr", "stmxcsr"};
  return set;
}

bool is_gpr32_index(const x86::Operand& op, int index) {
  if (op.kind != OperandKind::Register) return false;
  auto gi = x86::gpr_index(op.reg);
  return gi && *gi == index;
}

// Source of a simple `mov r32, src`; nullopt when src is a register to follow.
std::optional<ValueSource> direct_source(const x86::Instruction& ins) {
  const auto& src = ins.operands[1];
  if (src.kind == OperandKind::Immediate) return ConcreteValue{src.immediate_value.value_or(0)};
  if (src.kind == OperandKind::Memory) {
    bool segmented = src.segment_prefix && (*src.segment_prefix == x86::Segment::fs ||
                                            *src.segment_prefix == x86::Segment::gs);
    if (src.is_absolute_memory() && !segmented) return LoadFromValue{static_cast<Address>(*src.displacement)};
    return UnknownValue{};
  }
  if (x86::gpr_width(src.reg) == 4) return std::nullopt;
  return UnknownValue{};
}

bool is_mov_to_reg32(const x86::Instruction& ins) {
  return ins.mnemonic == "mov" && ins.operands.size() == 2 && ins.operands[0].kind == OperandKind::Register &&
         x86::gpr_width(ins.operands[0].reg) == 4;
}

class Walker {
 public:
  Walker(const ControlFlowGraph& cfg, const TraceLimits& limits) : cfg_(cfg), limits_(limits) {}

  ValueSource from(const BasicBlock& block, std::size_t index, Reg reg, std::size_t hops) {
    for (std::size_t i = index; i > 0; --i) {
      if (++scanned_ > limits_.max_scanned) return UnknownValue{};
      const auto& ins = block.instructions[i - 1];
      if (!writes_register(ins, reg)) continue;
      if (++hops > limits_.max_hops) return UnknownValue{};
      if (!is_mov_to_reg32(ins) || ins.operands[0].reg != reg) return UnknownValue{};
      if (auto direct = direct_source(ins)) return *direct;
      reg = ins.operands[1].reg;
    }
    std::optional<ValueSource> agreed;
    for (Address pred : cfg_.predecessors(block.start())) {
      if (cfg_.is_back_edge(pred, block.start())) continue;
      const BasicBlock* p = cfg_.block_at(pred);
      if (p == nullptr) return UnknownValue{};
      ValueSource v = from(*p, p->instructions.size(), reg, hops);
      if (std::holds_alternative<UnknownValue>(v)) return v;
      if (agreed && !(*agreed == v)) return UnknownValue{};
      agreed = v;
    }
    return agreed.value_or(UnknownValue{});
  }

 private:
  const ControlFlowGraph& cfg_;
  const TraceLimits& limits_;
  std::size_t scanned_ = 0;
};

}  // namespace

bool writes_register(const x86::Instruction& ins, Reg reg32) {
  auto index = x86::gpr_index(reg32);
  if (!index) return false;
  auto it = implicit_writes().find(ins.mnemonic);
  if (it != implicit_writes().end() && (it->second & (1u << *index)) != 0) return true;
  if (ins.mnemonic == "imul" && ins.operands.size() == 1 && (*index == 0 || *index == 2)) return true;
  if (ins.operands.empty()) return false;
  if (non_writing().count(ins.mnemonic) != 0) return false;
  if (ins.flow == x86::FlowKind::ConditionalJump) return false;
  if (is_gpr32_index(ins.operands[0], *index)) return true;
  if ((ins.mnemonic == "xchg" || ins.mnemonic == "xadd") && ins.operands.size() == 2 &&
      is_gpr32_index(ins.operands[1], *index)) {
    return true;
  }
  return false;
}

ValueSource trace_register_back(const ControlFlowGraph& cfg, Address site, Reg reg, const TraceLimits& limits) {
  if (x86::gpr_width(reg) != 4) return UnknownValue{};
  const BasicBlock* block = cfg.block_containing(site);
  if (block == nullptr) return UnknownValue{};
  std::size_t index = 0;
  while (index < block->instructions.size() && block->instructions[index].address != site) ++index;
  Walker walker(cfg, limits);
  return walker.from(*block, index, reg, 0);
}

DataFlowTrace build_dataflow(const ControlFlowGraph& cfg, const TraceLimits& limits) {
  DataFlowTrace trace;
  trace.function_entry = cfg.function_entry();
  for (const auto& [start, block] : cfg.blocks()) {
    for (const auto& ins : block.instructions) {
      for (int r = 0; r < 8; ++r) {
        Reg reg = x86::gpr32(r);
        if (!writes_register(ins, reg)) continue;
        ValueSource value = UnknownValue{};
        if (is_mov_to_reg32(ins) && ins.operands[0].reg == reg) {
          if (auto direct = direct_source(ins)) {
            value = *direct;
          } else {
            value = trace_register_back(cfg, ins.address, ins.operands[1].reg, limits);
          }
        }
        trace.definitions[{ins.address, reg}] = value;
      }
    }
  }
  return trace;
}

}  // namespace tadascope
