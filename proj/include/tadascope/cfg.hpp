#pragma once

#include <compare>
#include <map>
#include <set>
#include <vector>

#include "tadascope/image.hpp"
#include "tadascope/x86.hpp"

namespace tadascope {

struct BlockId {
  Address function_entry = 0;
  Address start = 0;

  auto operator<=>(const BlockId&) const = default;
};

struct BasicBlock {
  BlockId id;
  std::vector<x86::Instruction> instructions;
  std::vector<Address> successors;  // ascending, deduplicated

  Address start() const { return id.start; }
  Address end() const { return instructions.back().next(); }
  const x86::Instruction& terminator() const { return instructions.back(); }
};

struct Disassembly {
  Address entry = 0;
  std::vector<x86::Instruction> instructions;  // ascending by address, unique addresses
  std::vector<Address> decode_errors;          // reachable addresses that failed to decode
};

/// Recursive descent over fallthrough and direct branch targets. Calls are not followed.
/// Throws Error(EntryOutOfRange) when entry is not inside an executable section.
Disassembly disassemble_function(const BinaryImage& image, Address entry,
                                 const x86::InstructionDecoder& decoder = x86::default_decoder());

class ControlFlowGraph {
 public:
  ControlFlowGraph(Address function_entry, std::map<Address, BasicBlock> blocks);

  Address function_entry() const { return entry_; }
  const std::map<Address, BasicBlock>& blocks() const { return blocks_; }

  const BasicBlock* block_at(Address start) const;
  const BasicBlock* block_containing(Address instruction) const;
  const std::vector<Address>& predecessors(Address start) const;
  /// Edges (from, to) where to is on the DFS stack when reached from the entry.
  bool is_back_edge(Address from, Address to) const;

 private:
  Address entry_;
  std::map<Address, BasicBlock> blocks_;
  std::map<Address, std::vector<Address>> preds_;
  std::map<Address, Address> owner_;  // instruction address -> block start
  std::set<std::pair<Address, Address>> back_edges_;
};

ControlFlowGraph build_cfg(const std::vector<x86::Instruction>& instructions, Address entry);

/// Image entry point plus direct call targets found by a linear sweep of executable sections.
std::vector<Address> discover_functions(const BinaryImage& image,
                                        const x86::InstructionDecoder& decoder = x86::default_decoder());

std::set<Address> has_single_block_loop(const ControlFlowGraph& cfg);

}  // namespace tadascope
