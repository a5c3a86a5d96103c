#include <array>
#include <cstdio>

#include "tadascope/x86.hpp"

namespace tadascope::x86 {

namespace {

constexpr std::array<std::string_view, 71> kRegNames = {
    "",    "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi", "ax",  "cx",  "dx",  "bx",  "sp",  "bp",
    "si",  "di",  "al",  "cl",  "dl",  "bl",  "ah",  "ch",  "dh",  "bh",  "es",  "cs",  "ss",  "ds",  "fs",
    "gs",  "st0", "st1", "st2", "st3", "st4", "st5", "st6", "st7", "mm0", "mm1", "mm2", "mm3", "mm4", "mm5",
    "mm6", "mm7", "xmm0", "xmm1", "xmm2", "xmm3", "xmm4", "xmm5", "xmm6", "xmm7", "cr0", "cr1", "cr2", "cr3",
    "cr4", "cr5", "cr6", "cr7", "dr0", "dr1", "dr2", "dr3", "dr4", "dr5", "dr6", "dr7"};

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%X", v);
  return buf;
}

std::string_view size_keyword(std::uint8_t size) {
  switch (size) {
    case 1: return "byte ptr ";
    case 2: return "word ptr ";
    case 4: return "dword ptr ";
    case 8: return "qword ptr ";
    case 10: return "tbyte ptr ";
    case 16: return "xmmword ptr ";
    default: return "";
  }
}

}  // namespace

std::string_view name(Reg reg) {
  auto i = static_cast<std::size_t>(reg);
  return i < kRegNames.size() ? kRegNames[i] : std::string_view{};
}

std::string_view name(Segment seg) {
  static constexpr std::string_view names[6] = {"es", "cs", "ss", "ds", "fs", "gs"};
  return names[static_cast<int>(seg)];
}

std::optional<int> gpr_index(Reg reg) {
  int r = static_cast<int>(reg);
  if (reg >= Reg::eax && reg <= Reg::edi) return r - static_cast<int>(Reg::eax);
  if (reg >= Reg::ax && reg <= Reg::di) return r - static_cast<int>(Reg::ax);
  if (reg >= Reg::al && reg <= Reg::bl) return r - static_cast<int>(Reg::al);
  if (reg >= Reg::ah && reg <= Reg::bh) return r - static_cast<int>(Reg::ah);
  return std::nullopt;
}

Reg gpr32(int index) { return static_cast<Reg>(static_cast<int>(Reg::eax) + index); }

int gpr_width(Reg reg) {
  if (reg >= Reg::eax && reg <= Reg::edi) return 4;
  if (reg >= Reg::ax && reg <= Reg::di) return 2;
  if (reg >= Reg::al && reg <= Reg::bh) return 1;
  return 0;
}

bool is_high_byte(Reg reg) { return reg >= Reg::ah && reg <= Reg::bh; }

std::string format(const Operand& op) {
  switch (op.kind) {
    case OperandKind::Register: return std::string(name(op.reg));
    case OperandKind::Immediate: return hex(op.immediate_value.value_or(0));
    case OperandKind::Memory: break;
  }
  std::string out(size_keyword(op.size));
  if (op.segment_prefix) {
    out += name(*op.segment_prefix);
    out += ':';
  }
  out += '[';
  bool any = false;
  if (op.base != Reg::none) {
    out += name(op.base);
    any = true;
  }
  if (op.index != Reg::none) {
    if (any) out += '+';
    out += name(op.index);
    if (op.scale != 1) out += "*" + std::to_string(op.scale);
    any = true;
  }
  std::int32_t disp = op.displacement.value_or(0);
  if (!any) {
    out += hex(static_cast<std::uint32_t>(disp));
  } else if (disp > 0) {
    out += '+' + hex(static_cast<std::uint32_t>(disp));
  } else if (disp < 0) {
    out += '-' + hex(static_cast<std::uint32_t>(-static_cast<std::int64_t>(disp)));
  }
  out += ']';
  return out;
}

std::string format(const Instruction& ins) {
  std::string out;
  if (ins.lock) out += "lock ";
  if (ins.rep) out += "rep ";
  if (ins.repne) out += "repne ";
  out += ins.mnemonic;
  for (std::size_t i = 0; i < ins.operands.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += format(ins.operands[i]);
  }
  return out;
}

}  // namespace tadascope::x86
