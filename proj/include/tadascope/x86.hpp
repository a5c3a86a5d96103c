#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tadascope/image.hpp"

namespace tadascope::x86 {

enum class Reg : std::uint8_t {
  none,
  // 32-bit general purpose, in encoding order
  eax, ecx, edx, ebx, esp, ebp, esi, edi,
  ax, cx, dx, bx, sp, bp, si, di,
  al, cl, dl, bl, ah, ch, dh, bh,
  es, cs, ss, ds, fs, gs,
  st0, st1, st2, st3, st4, st5, st6, st7,
  mm0, mm1, mm2, mm3, mm4, mm5, mm6, mm7,
  xmm0, xmm1, xmm2, xmm3, xmm4, xmm5, xmm6, xmm7,
  cr0, cr1, cr2, cr3, cr4, cr5, cr6, cr7,
  dr0, dr1, dr2, dr3, dr4, dr5, dr6, dr7,
};

enum class Segment : std::uint8_t { es, cs, ss, ds, fs, gs };

std::string_view name(Reg reg);
std::string_view name(Segment seg);

/// Index 0..7 of the 32-bit register a general-purpose register aliases (al/ax/eax -> 0).
std::optional<int> gpr_index(Reg reg);
Reg gpr32(int index);
/// Width in bytes of a general-purpose register (1, 2 or 4); 0 otherwise.
int gpr_width(Reg reg);
/// True for ah/ch/dh/bh.
bool is_high_byte(Reg reg);

enum class OperandKind : std::uint8_t { Register, Immediate, Memory };

struct Operand {
  OperandKind kind = OperandKind::Register;
  std::uint8_t size = 0;  // bytes; 0 when unsized (lea source, far pointers)

  Reg reg = Reg::none;  // Register

  std::optional<std::uint32_t> immediate_value;  // Immediate (branch operands hold the absolute target)

  // Memory
  std::optional<Segment> segment_prefix;  // explicit override only
  Reg base = Reg::none;
  Reg index = Reg::none;
  std::uint8_t scale = 1;
  std::optional<std::int32_t> displacement;

  /// Memory operand addressed purely by displacement (no base, no index).
  bool is_absolute_memory() const {
    return kind == OperandKind::Memory && base == Reg::none && index == Reg::none && displacement.has_value();
  }
};

enum class FlowKind : std::uint8_t { Sequential, Call, Jump, ConditionalJump, Return, Halt };

struct Instruction {
  Address address = 0;
  std::uint8_t length = 0;
  std::string mnemonic;  // lowercase
  std::vector<Operand> operands;
  std::vector<std::uint8_t> raw_bytes;
  FlowKind flow = FlowKind::Sequential;
  std::optional<Address> branch_target;  // direct call/jump/jcc only
  bool rep = false;
  bool repne = false;
  bool lock = false;

  Address next() const { return address + length; }
  bool transfers_control() const { return flow != FlowKind::Sequential; }
};

/// Decodes one instruction at an address. Implementations must be thread-safe.
class InstructionDecoder {
 public:
  virtual ~InstructionDecoder() = default;
  /// nullopt when the bytes do not form a valid instruction (or are truncated).
  virtual std::optional<Instruction> decode(std::span<const std::uint8_t> bytes, Address address) const = 0;
};

/// Table-driven IA-32 decoder covering the integer, x87 and common SSE/MMX opcode space.
class X86Decoder final : public InstructionDecoder {
 public:
  std::optional<Instruction> decode(std::span<const std::uint8_t> bytes, Address address) const override;
};

const InstructionDecoder& default_decoder();

/// Decodes the instruction at va using the image's file-backed bytes.
std::optional<Instruction> decode_at(const BinaryImage& image, Address va,
                                     const InstructionDecoder& decoder = default_decoder());

/// Intel-syntax rendering, e.g. "mov eax, dword ptr fs:[0x30]".
std::string format(const Instruction& ins);
std::string format(const Operand& op);

}  // namespace tadascope::x86
