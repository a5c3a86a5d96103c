#include "tadascope/cfg.hpp"

#include <algorithm>
#include <deque>

#include "tadascope/error.hpp"

namespace tadascope {

namespace {

char hex_digit(unsigned v) { return "0123456789ABCDEF"[v & 0xF]; }

std::string hex32(Address a) {
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += hex_digit(a >> shift);
  return s;
}

}  // namespace

Disassembly disassemble_function(const BinaryImage& image, Address entry, const x86::InstructionDecoder& decoder) {
  if (!image.is_executable(entry)) {
    throw Error(ErrorCode::EntryOutOfRange, "function entry " + hex32(entry) + " is not in an executable section");
  }
  Disassembly out;
  out.entry = entry;
  std::map<Address, x86::Instruction> decoded;
  std::set<Address> failed;
  std::deque<Address> work{entry};
  while (!work.empty()) {
    Address va = work.front();
    work.pop_front();
    while (true) {
      if (decoded.count(va) != 0 || failed.count(va) != 0) break;
      if (!image.is_executable(va)) break;
      auto ins = x86::decode_at(image, va, decoder);
      if (!ins) {
        failed.insert(va);
        break;
      }
      Address next = ins->next();
      x86::FlowKind flow = ins->flow;
      std::optional<Address> target = ins->branch_target;
      decoded.emplace(va, std::move(*ins));
      if (flow == x86::FlowKind::Jump || flow == x86::FlowKind::ConditionalJump) {
        if (target && image.is_executable(*target)) work.push_back(*target);
      }
      if (flow == x86::FlowKind::Jump || flow == x86::FlowKind::Return || flow == x86::FlowKind::Halt) break;
      if (next < va) break;  // wrapped the address space
      va = next;
    }
  }
  out.instructions.reserve(decoded.size());
  for (auto& [va, ins] : decoded) out.instructions.push_back(std::move(ins));
  out.decode_errors.assign(failed.begin(), failed.end());
  return out;
}

ControlFlowGraph::ControlFlowGraph(Address function_entry, std::map<Address, BasicBlock> blocks)
    : entry_(function_entry), blocks_(std::move(blocks)) {
  for (const auto& [start, block] : blocks_) {
    preds_[start];
    for (const auto& ins : block.instructions) owner_[ins.address] = start;
    for (Address s : block.successors) preds_[s].push_back(start);
  }

  // Iterative DFS from the entry to classify back edges.
  if (blocks_.count(entry_) == 0) return;
  std::set<Address> on_stack, done;
  std::vector<std::pair<Address, std::size_t>> stack{{entry_, 0}};
  on_stack.insert(entry_);
  while (!stack.empty()) {
    auto& [node, next_index] = stack.back();
    const auto& succ = blocks_.at(node).successors;
    if (next_index < succ.size()) {
      Address to = succ[next_index++];
      if (on_stack.count(to) != 0) {
        back_edges_.emplace(node, to);
      } else if (done.count(to) == 0 && blocks_.count(to) != 0) {
        on_stack.insert(to);
        stack.emplace_back(to, 0);
      }
    } else {
      on_stack.erase(node);
      done.insert(node);
      stack.pop_back();
    }
  }
}

const BasicBlock* ControlFlowGraph::block_at(Address start) const {
  auto it = blocks_.find(start);
  return it == blocks_.end() ? nullptr : &it->second;
}

const BasicBlock* ControlFlowGraph::block_containing(Address instruction) const {
  auto it = owner_.find(instruction);
  return it == owner_.end() ? nullptr : block_at(it->second);
}

const std::vector<Address>& ControlFlowGraph::predecessors(Address start) const {
  static const std::vector<Address> kNone;
  auto it = preds_.find(start);
  return it == preds_.end() ? kNone : it->second;
}

bool ControlFlowGraph::is_back_edge(Address from, Address to) const {
  return back_edges_.count({from, to}) != 0;
}

ControlFlowGraph build_cfg(const std::vector<x86::Instruction>& instructions, Address entry) {
  std::set<Address> present;
  for (const auto& ins : instructions) present.insert(ins.address);

  std::set<Address> leaders;
  if (present.count(entry) != 0) leaders.insert(entry);
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    const auto& ins = instructions[i];
    if (i == 0 || instructions[i - 1].next() != ins.address) leaders.insert(ins.address);
    if (ins.transfers_control()) {
      if (present.count(ins.next()) != 0) leaders.insert(ins.next());
      if (ins.branch_target && ins.flow != x86::FlowKind::Call && present.count(*ins.branch_target) != 0) {
        leaders.insert(*ins.branch_target);
      }
    }
  }

  std::map<Address, BasicBlock> blocks;
  BasicBlock* current = nullptr;
  for (const auto& ins : instructions) {
    if (leaders.count(ins.address) != 0) {
      BasicBlock& b = blocks[ins.address];
      b.id = BlockId{entry, ins.address};
      current = &b;
    }
    current->instructions.push_back(ins);
  }

  for (auto& [start, block] : blocks) {
    const auto& last = block.terminator();
    std::set<Address> succ;
    auto add = [&](Address a) {
      if (present.count(a) != 0) succ.insert(a);
    };
    switch (last.flow) {
      case x86::FlowKind::ConditionalJump:
        if (last.branch_target) add(*last.branch_target);
        add(last.next());
        break;
      case x86::FlowKind::Jump:
        if (last.branch_target) add(*last.branch_target);
        break;
      case x86::FlowKind::Call:
      case x86::FlowKind::Sequential:
        add(last.next());
        break;
      case x86::FlowKind::Return:
      case x86::FlowKind::Halt:
        break;
    }
    block.successors.assign(succ.begin(), succ.end());
  }
  return ControlFlowGraph(entry, std::move(blocks));
}

std::vector<Address> discover_functions(const BinaryImage& image, const x86::InstructionDecoder& decoder) {
  std::set<Address> entries;
  if (image.is_executable(image.entry_point())) entries.insert(image.entry_point());
  for (const auto& section : image.sections()) {
    if (!section.executable()) continue;
    std::uint64_t end = section.virtual_address + std::uint64_t{section.data.size()};
    std::uint64_t va = section.virtual_address;
    while (va < end) {
      auto ins = x86::decode_at(image, static_cast<Address>(va), decoder);
      if (!ins) {
        ++va;
        continue;
      }
      if (ins->flow == x86::FlowKind::Call && ins->branch_target && image.is_executable(*ins->branch_target)) {
        entries.insert(*ins->branch_target);
      }
      va += ins->length;
    }
  }
  return {entries.begin(), entries.end()};
}

std::set<Address> has_single_block_loop(const ControlFlowGraph& cfg) {
  std::set<Address> out;
  for (const auto& [start, block] : cfg.blocks()) {
    if (std::binary_search(block.successors.begin(), block.successors.end(), start)) out.insert(start);
  }
  return out;
}

}  // namespace tadascope
