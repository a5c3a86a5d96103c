#pragma once

#include <array>
#include <map>
#include <optional>
#include <unordered_map>

#include "tadascope/cfg.hpp"

namespace tadascope {

/// Small interpreter over one function's decoded instructions.
/// Registers start at zero (esp at stack_top); reads of unwritten memory fall back to the image, then zero.
class Emulator {
 public:
  struct Config {
    std::size_t max_steps = 100000;
    Address stack_top = 0x7FF00000;
  };

  enum class Halt { Returned, LeftFunction, StepLimit, StopAddress };

  struct WrittenByte {
    std::uint8_t value = 0;
    Address writer = 0;         // instruction address of the last write
    std::uint64_t sequence = 0; // global write order
  };

  Emulator(const BinaryImage& image, const ControlFlowGraph& cfg, Config config);
  Emulator(const BinaryImage& image, const ControlFlowGraph& cfg) : Emulator(image, cfg, Config{}) {}

  /// Runs from the current eip (initially the function entry) until a halt condition.
  /// With stop_at, halts before executing the instruction at that address.
  Halt run(std::optional<Address> stop_at = std::nullopt);

  std::uint32_t reg(x86::Reg reg) const;
  Address eip() const { return eip_; }
  std::size_t steps() const { return steps_; }
  std::uint8_t read8(Address va) const;
  const std::map<Address, WrittenByte>& written() const { return overlay_; }

 private:
  struct Flags {
    bool cf = false, zf = false, sf = false, of = false, pf = false;
  };

  void set_reg(x86::Reg reg, std::uint32_t value);
  std::optional<Address> effective_address(const x86::Operand& op) const;
  std::uint32_t read_mem(Address va, int size) const;
  void write_mem(Address va, std::uint32_t value, int size);
  std::uint32_t load(const x86::Operand& op) const;
  void store(const x86::Operand& op, std::uint32_t value);
  void push32(std::uint32_t value);
  std::uint32_t pop32();
  void set_result_flags(std::uint32_t result, int size);
  bool condition(int cc) const;
  /// Executes one instruction; returns a halt reason when execution must stop.
  std::optional<Halt> step(const x86::Instruction& ins);
  void clobber_unknown(const x86::Instruction& ins);

  const BinaryImage& image_;
  Config config_;
  std::unordered_map<Address, const x86::Instruction*> code_;
  std::array<std::uint32_t, 8> regs_{};
  Flags flags_;
  Address eip_ = 0;
  std::size_t steps_ = 0;
  std::uint64_t write_sequence_ = 0;
  Address current_ = 0;
  std::map<Address, WrittenByte> overlay_;
};

}  // namespace tadascope
