#include "tadascope/emulator.hpp"

#include <bit>
#include <string_view>
#include <unordered_map>

#include "tadascope/dataflow.hpp"

namespace tadascope {

namespace {

using x86::OperandKind;
using x86::Reg;

std::uint32_t mask_for(int size) {
  return size >= 4 ? 0xFFFFFFFFu : (1u << (8 * size)) - 1;
}
std::uint32_t sign_bit(int size) { return 1u << (8 * (size >= 4 ? 4 : size) - 1); }

std::uint32_t sign_extend(std::uint32_t v, int size) {
  if (size == 1) return static_cast<std::uint32_t>(static_cast<std::int32_t>(static_cast<std::int8_t>(v)));
  if (size == 2) return static_cast<std::uint32_t>(static_cast<std::int32_t>(static_cast<std::int16_t>(v)));
  return v;
}

int condition_code(std::string_view mnemonic) {
  static const std::unordered_map<std::string_view, int> table = {
      {"jo", 0}, {"jno", 1}, {"jb", 2},  {"jae", 3}, {"jz", 4},  {"jnz", 5},  {"jbe", 6},  {"ja", 7},
      {"js", 8}, {"jns", 9}, {"jp", 10}, {"jnp", 11}, {"jl", 12}, {"jge", 13}, {"jle", 14}, {"jg", 15}};
  auto it = table.find(mnemonic);
  return it == table.end() ? -1 : it->second;
}

int operand_size(const x86::Operand& op) { return op.size == 0 ? 4 : op.size; }

}  // namespace

Emulator::Emulator(const BinaryImage& image, const ControlFlowGraph& cfg, Config config)
    : image_(image), config_(config) {
  for (const auto& [start, block] : cfg.blocks()) {
    for (const auto& ins : block.instructions) code_[ins.address] = &ins;
  }
  regs_[4] = config_.stack_top;
  eip_ = cfg.function_entry();
}

std::uint32_t Emulator::reg(Reg r) const {
  auto index = x86::gpr_index(r);
  if (!index) return 0;
  std::uint32_t full = regs_[*index];
  switch (x86::gpr_width(r)) {
    case 4: return full;
    case 2: return full & 0xFFFF;
    default: return x86::is_high_byte(r) ? (full >> 8) & 0xFF : full & 0xFF;
  }
}

void Emulator::set_reg(Reg r, std::uint32_t value) {
  auto index = x86::gpr_index(r);
  if (!index) return;
  std::uint32_t& full = regs_[*index];
  switch (x86::gpr_width(r)) {
    case 4: full = value; break;
    case 2: full = (full & 0xFFFF0000u) | (value & 0xFFFF); break;
    default:
      if (x86::is_high_byte(r)) {
        full = (full & 0xFFFF00FFu) | ((value & 0xFF) << 8);
      } else {
        full = (full & 0xFFFFFF00u) | (value & 0xFF);
      }
  }
}

std::optional<Address> Emulator::effective_address(const x86::Operand& op) const {
  if (op.segment_prefix && (*op.segment_prefix == x86::Segment::fs || *op.segment_prefix == x86::Segment::gs)) {
    return std::nullopt;  // thread/process structures are not modelled
  }
  std::uint32_t a = static_cast<std::uint32_t>(op.displacement.value_or(0));
  if (op.base != Reg::none) a += reg(op.base);
  if (op.index != Reg::none) a += reg(op.index) * op.scale;
  return a;
}

std::uint8_t Emulator::read8(Address va) const {
  auto it = overlay_.find(va);
  if (it != overlay_.end()) return it->second.value;
  return image_.byte_at(va).value_or(0);
}

std::uint32_t Emulator::read_mem(Address va, int size) const {
  std::uint32_t v = 0;
  for (int i = 0; i < size && i < 4; ++i) v |= std::uint32_t{read8(va + i)} << (8 * i);
  return v;
}

void Emulator::write_mem(Address va, std::uint32_t value, int size) {
  for (int i = 0; i < size && i < 4; ++i) {
    overlay_[va + i] = WrittenByte{static_cast<std::uint8_t>(value >> (8 * i)), current_, ++write_sequence_};
  }
}

std::uint32_t Emulator::load(const x86::Operand& op) const {
  switch (op.kind) {
    case OperandKind::Register: return reg(op.reg);
    case OperandKind::Immediate: return op.immediate_value.value_or(0);
    case OperandKind::Memory: {
      auto ea = effective_address(op);
      return ea ? read_mem(*ea, operand_size(op)) : 0;
    }
  }
  return 0;
}

void Emulator::store(const x86::Operand& op, std::uint32_t value) {
  if (op.kind == OperandKind::Register) {
    set_reg(op.reg, value);
  } else if (op.kind == OperandKind::Memory) {
    if (auto ea = effective_address(op)) write_mem(*ea, value, operand_size(op));
  }
}

void Emulator::push32(std::uint32_t value) {
  regs_[4] -= 4;
  write_mem(regs_[4], value, 4);
}

std::uint32_t Emulator::pop32() {
  std::uint32_t v = read_mem(regs_[4], 4);
  regs_[4] += 4;
  return v;
}

void Emulator::set_result_flags(std::uint32_t result, int size) {
  result &= mask_for(size);
  flags_.zf = result == 0;
  flags_.sf = (result & sign_bit(size)) != 0;
  flags_.pf = (std::popcount(result & 0xFFu) % 2) == 0;
}

bool Emulator::condition(int cc) const {
  const Flags& f = flags_;
  bool r = false;
  switch (cc >> 1) {
    case 0: r = f.of; break;
    case 1: r = f.cf; break;
    case 2: r = f.zf; break;
    case 3: r = f.cf || f.zf; break;
    case 4: r = f.sf; break;
    case 5: r = f.pf; break;
    case 6: r = f.sf != f.of; break;
    case 7: r = f.zf || (f.sf != f.of); break;
  }
  return (cc & 1) != 0 ? !r : r;
}

void Emulator::clobber_unknown(const x86::Instruction& ins) {
  for (int r = 0; r < 8; ++r) {
    if (r == 4) continue;
    if (writes_register(ins, x86::gpr32(r))) regs_[r] = 0;
  }
  if (!ins.operands.empty() && ins.operands[0].kind == OperandKind::Register &&
      x86::gpr_width(ins.operands[0].reg) != 0 && ins.operands[0].reg != Reg::esp) {
    set_reg(ins.operands[0].reg, 0);
  }
}

std::optional<Emulator::Halt> Emulator::step(const x86::Instruction& ins) {
  current_ = ins.address;
  Address next = ins.next();
  const auto& ops = ins.operands;
  const std::string& m = ins.mnemonic;
  auto size0 = [&] { return ops.empty() ? 4 : operand_size(ops[0]); };

  if (int cc = condition_code(m); cc >= 0) {
    eip_ = condition(cc) ? ins.branch_target.value_or(next) : next;
    return std::nullopt;
  }

  if (m == "mov") {
    store(ops[0], load(ops[1]));
  } else if (m == "movzx") {
    store(ops[0], load(ops[1]) & mask_for(operand_size(ops[1])));
  } else if (m == "movsx") {
    store(ops[0], sign_extend(load(ops[1]), operand_size(ops[1])));
  } else if (m == "lea") {
    store(ops[0], effective_address(ops[1]).value_or(0));
  } else if (m == "add" || m == "adc" || m == "sub" || m == "sbb" || m == "cmp") {
    int size = size0();
    std::uint64_t a = load(ops[0]) & mask_for(size);
    std::uint64_t b = load(ops[1]) & mask_for(size);
    std::uint64_t carry = (m == "adc" || m == "sbb") && flags_.cf ? 1 : 0;
    std::uint32_t r;
    if (m == "add" || m == "adc") {
      std::uint64_t wide = a + b + carry;
      r = static_cast<std::uint32_t>(wide);
      flags_.cf = wide > mask_for(size);
      flags_.of = ((a ^ r) & (b ^ r) & sign_bit(size)) != 0;
    } else {
      r = static_cast<std::uint32_t>(a - b - carry);
      flags_.cf = a < b + carry;
      flags_.of = ((a ^ b) & (a ^ r) & sign_bit(size)) != 0;
    }
    set_result_flags(r, size);
    if (m != "cmp") store(ops[0], r & mask_for(size));
  } else if (m == "xor" || m == "or" || m == "and" || m == "test") {
    int size = size0();
    std::uint32_t a = load(ops[0]), b = load(ops[1]);
    std::uint32_t r = m == "xor" ? a ^ b : m == "or" ? a | b : a & b;
    r &= mask_for(size);
    flags_.cf = flags_.of = false;
    set_result_flags(r, size);
    if (m != "test") store(ops[0], r);
  } else if (m == "inc" || m == "dec") {
    int size = size0();
    std::uint32_t a = load(ops[0]) & mask_for(size);
    std::uint32_t r = (m == "inc" ? a + 1 : a - 1) & mask_for(size);
    flags_.of = m == "inc" ? r == sign_bit(size) : a == sign_bit(size);
    set_result_flags(r, size);
    store(ops[0], r);
  } else if (m == "neg") {
    int size = size0();
    std::uint32_t a = load(ops[0]) & mask_for(size);
    std::uint32_t r = (0u - a) & mask_for(size);
    flags_.cf = a != 0;
    flags_.of = a == sign_bit(size);
    set_result_flags(r, size);
    store(ops[0], r);
  } else if (m == "not") {
    store(ops[0], ~load(ops[0]) & mask_for(size0()));
  } else if (m == "shl" || m == "sal" || m == "shr" || m == "sar" || m == "rol" || m == "ror") {
    int size = size0();
    int bits = 8 * size;
    std::uint32_t a = load(ops[0]) & mask_for(size);
    unsigned count = (ops.size() > 1 ? load(ops[1]) : 1) & 31;
    if (count != 0) {
      std::uint32_t r = 0;
      if (m == "shl" || m == "sal") {
        r = count >= static_cast<unsigned>(bits) ? 0 : a << count;
        flags_.cf = count <= static_cast<unsigned>(bits) && ((a >> (bits - count)) & 1) != 0;
        set_result_flags(r, size);
      } else if (m == "shr") {
        r = count >= static_cast<unsigned>(bits) ? 0 : a >> count;
        flags_.cf = ((a >> (count - 1)) & 1) != 0;
        set_result_flags(r, size);
      } else if (m == "sar") {
        auto s = static_cast<std::int32_t>(sign_extend(a, size));
        r = static_cast<std::uint32_t>(s >> (count >= 32 ? 31 : count));
        flags_.cf = ((s >> (count - 1 >= 31 ? 31 : count - 1)) & 1) != 0;
        set_result_flags(r, size);
      } else {
        unsigned c = count % bits;
        r = c == 0 ? a : (m == "rol" ? (a << c) | (a >> (bits - c)) : (a >> c) | (a << (bits - c)));
        r &= mask_for(size);
        flags_.cf = m == "rol" ? (r & 1) != 0 : (r & sign_bit(size)) != 0;
      }
      store(ops[0], r & mask_for(size));
    }
  } else if (m == "xchg") {
    std::uint32_t a = load(ops[0]), b = load(ops[1]);
    store(ops[0], b);
    store(ops[1], a);
  } else if (m == "push") {
    std::uint32_t v = load(ops[0]);
    if (ops[0].kind == OperandKind::Register && x86::gpr_width(ops[0].reg) == 0) v &= 0xFFFF;
    push32(v);
  } else if (m == "pop") {
    std::uint32_t v = pop32();
    if (ops[0].kind != OperandKind::Register || x86::gpr_width(ops[0].reg) != 0) store(ops[0], v);
  } else if (m == "pushad") {
    std::uint32_t original_esp = regs_[4];
    for (int r = 0; r < 8; ++r) push32(r == 4 ? original_esp : regs_[r]);
  } else if (m == "popad") {
    for (int r = 7; r >= 0; --r) {
      std::uint32_t v = pop32();
      if (r != 4) regs_[r] = v;
    }
  } else if (m == "leave") {
    regs_[4] = regs_[5];
    regs_[5] = pop32();
  } else if (m == "loop" || m == "loope" || m == "loopne") {
    regs_[1] -= 1;
    bool taken = regs_[1] != 0 && (m == "loop" || (m == "loope" ? flags_.zf : !flags_.zf));
    eip_ = taken ? ins.branch_target.value_or(next) : next;
    return std::nullopt;
  } else if (m == "jecxz") {
    eip_ = regs_[1] == 0 ? ins.branch_target.value_or(next) : next;
    return std::nullopt;
  } else if (m == "jmp") {
    if (!ins.branch_target) return Halt::LeftFunction;
    eip_ = *ins.branch_target;
    return std::nullopt;
  } else if (m == "call") {
    regs_[0] = 0;  // external effects are not modelled; the callee returns zero
  } else if (ins.flow == x86::FlowKind::Return || ins.flow == x86::FlowKind::Halt) {
    return Halt::Returned;
  } else if (m == "stosb" || m == "stosw" || m == "stosd" || m == "movsb" || m == "movsw" || m == "movsd" ||
             m == "lodsb" || m == "lodsw" || m == "lodsd") {
    int size = m.back() == 'b' ? 1 : m.back() == 'w' ? 2 : 4;
    bool repeat = ins.rep || ins.repne;
    std::uint32_t count = repeat ? regs_[1] : 1;
    std::string_view kind(m.data(), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
      if (steps_ >= config_.max_steps) return Halt::StepLimit;
      ++steps_;
      if (kind == "stos") {
        write_mem(regs_[7], regs_[0], size);
        regs_[7] += size;
      } else if (kind == "movs") {
        write_mem(regs_[7], read_mem(regs_[6], size), size);
        regs_[6] += size;
        regs_[7] += size;
      } else {
        set_reg(size == 1 ? Reg::al : size == 2 ? Reg::ax : Reg::eax, read_mem(regs_[6], size));
        regs_[6] += size;
      }
      if (repeat) regs_[1] -= 1;
    }
  } else if (m == "nop" || m == "cld" || m == "clc" || m == "stc" || m == "cmc") {
    if (m == "clc") flags_.cf = false;
    if (m == "stc") flags_.cf = true;
    if (m == "cmc") flags_.cf = !flags_.cf;
  } else {
    clobber_unknown(ins);
  }
  eip_ = next;
  return std::nullopt;
}

Emulator::Halt Emulator::run(std::optional<Address> stop_at) {
  while (true) {
    if (stop_at && eip_ == *stop_at) return Halt::StopAddress;
    auto it = code_.find(eip_);
    if (it == code_.end()) return Halt::LeftFunction;
    if (steps_ >= config_.max_steps) return Halt::StepLimit;
    ++steps_;
    if (auto halt = step(*it->second)) return *halt;
  }
}

}  // namespace tadascope
