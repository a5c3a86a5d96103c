#pragma once

#include <map>
#include <utility>
#include <variant>

#include "tadascope/cfg.hpp"

namespace tadascope {

struct UnknownValue {
  bool operator==(const UnknownValue&) const = default;
};
struct ConcreteValue {
  std::uint32_t value = 0;
  bool operator==(const ConcreteValue&) const = default;
};
struct LoadFromValue {
  Address address = 0;
  bool operator==(const LoadFromValue&) const = default;
};

using ValueSource = std::variant<UnknownValue, ConcreteValue, LoadFromValue>;

struct TraceLimits {
  std::size_t max_hops = 64;          // defining instructions followed
  std::size_t max_scanned = 4096;     // instructions inspected in total
};

/// Value held by a 32-bit register immediately before the instruction at site executes.
/// Follows mov r,imm / mov r,[disp] / mov r,r copies backward; anything else yields Unknown.
ValueSource trace_register_back(const ControlFlowGraph& cfg, Address site, x86::Reg reg,
                                const TraceLimits& limits = {});

/// True when the instruction may overwrite any part of the given 32-bit register.
bool writes_register(const x86::Instruction& ins, x86::Reg reg32);

struct DataFlowTrace {
  Address function_entry = 0;
  // Value written by each register-defining instruction.
  std::map<std::pair<Address, x86::Reg>, ValueSource> definitions;
};

DataFlowTrace build_dataflow(const ControlFlowGraph& cfg, const TraceLimits& limits = {});

}  // namespace tadascope
