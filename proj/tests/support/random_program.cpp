#include "random_program.hpp"

#include <cstdio>
#include <map>

#include "tadascope/cfg.hpp"
#include "tadascope/fixture.hpp"

namespace testsupport {
namespace {

void append32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

// Fixed-length non-branching encodings; the register field is randomized.
std::vector<std::uint8_t> plain(std::mt19937& rng) {
  std::uniform_int_distribution<int> pick(0, 9), reg(0, 7), byte(0, 255);
  int r = reg(rng), r2 = reg(rng);
  switch (pick(rng)) {
    case 0: return {0x90};
    case 1: {
      std::vector<std::uint8_t> v{static_cast<std::uint8_t>(0xB8 + r)};
      append32(v, static_cast<std::uint32_t>(byte(rng)) * 0x01010101u);
      return v;
    }
    case 2: return {0x01, static_cast<std::uint8_t>(0xC0 | (r2 << 3) | r)};
    case 3: return {0x31, static_cast<std::uint8_t>(0xC0 | (r2 << 3) | r)};
    case 4: return {0x83, static_cast<std::uint8_t>(0xF8 | r), static_cast<std::uint8_t>(byte(rng))};
    case 5: return {static_cast<std::uint8_t>(0x50 + r)};
    case 6: return {static_cast<std::uint8_t>(0x58 + r)};
    case 7: return {0x8D, static_cast<std::uint8_t>(0x40 | (r2 << 3) | (r == 4 ? 0 : r)), static_cast<std::uint8_t>(byte(rng))};
    case 8: return {0x85, static_cast<std::uint8_t>(0xC0 | (r2 << 3) | r)};
    default: return {static_cast<std::uint8_t>(0x40 + r)};
  }
}

}  // namespace

std::vector<std::uint8_t> RandomProgram::bytes() const {
  std::vector<std::uint8_t> out;
  for (const auto& ins : instructions) out.insert(out.end(), ins.bytes.begin(), ins.bytes.end());
  return out;
}

std::string RandomProgram::fixture() const {
  char line[32];
  std::snprintf(line, sizeof line, "base 0x%X\n", base);
  std::string out = line;
  for (const auto& ins : instructions) {
    out += "code_hex";
    for (auto b : ins.bytes) {
      std::snprintf(line, sizeof line, " %02x", b);
      out += line;
    }
    out += "\n";
  }
  return out;
}

const GenInstruction* RandomProgram::at(std::uint32_t address) const {
  for (const auto& ins : instructions) {
    if (ins.address == address) return &ins;
  }
  return nullptr;
}

std::set<std::uint32_t> RandomProgram::expected_successors(const GenInstruction& t) const {
  std::set<std::uint32_t> out;
  bool falls_through = t.kind == GenKind::Plain || t.kind == GenKind::Jcc || t.kind == GenKind::Call;
  if (falls_through && at(t.next()) != nullptr) out.insert(t.next());
  if (t.kind == GenKind::Jcc || t.kind == GenKind::Jmp) out.insert(t.target);
  return out;
}

std::set<std::uint32_t> RandomProgram::reachable() const {
  std::set<std::uint32_t> seen;
  std::vector<std::uint32_t> work{base};
  while (!work.empty()) {
    std::uint32_t a = work.back();
    work.pop_back();
    const GenInstruction* ins = at(a);
    if (ins == nullptr || !seen.insert(a).second) continue;
    for (auto s : expected_successors(*ins)) work.push_back(s);
  }
  return seen;
}

std::set<std::uint32_t> RandomProgram::expected_leaders() const {
  auto live = reachable();
  std::set<std::uint32_t> out{base};
  for (const auto& ins : instructions) {
    if (!live.count(ins.address)) continue;
    if (ins.kind == GenKind::Jcc || ins.kind == GenKind::Jmp) out.insert(ins.target);
    if (ins.kind != GenKind::Plain && live.count(ins.next())) out.insert(ins.next());
  }
  return out;
}

RandomProgram generate_program(std::mt19937& rng, std::size_t max_instructions) {
  RandomProgram p;
  std::uniform_int_distribution<std::size_t> count(1, max_instructions);
  std::uniform_int_distribution<int> kind(0, 99), cc(0, 15), shortform(0, 1);
  std::size_t n = count(rng);

  // Lay out lengths first; branch displacements are filled once every address is known.
  struct Slot {
    GenKind kind;
    bool rel8;
    int cc;
  };
  std::vector<Slot> slots;
  std::uint32_t addr = p.base;
  for (std::size_t i = 0; i < n; ++i) {
    GenInstruction ins;
    ins.address = addr;
    Slot slot{GenKind::Plain, false, 0};
    int k = i + 1 == n ? 100 : kind(rng);
    if (k < 62) {
      ins.bytes = plain(rng);
    } else if (k < 80) {
      slot = {GenKind::Jcc, shortform(rng) == 1, cc(rng)};
      ins.bytes.assign(slot.rel8 ? 2 : 6, 0);
    } else if (k < 88) {
      slot = {GenKind::Jmp, shortform(rng) == 1, 0};
      ins.bytes.assign(slot.rel8 ? 2 : 5, 0);
    } else if (k < 94) {
      slot = {GenKind::Call, false, 0};
      ins.bytes.assign(5, 0);
    } else {
      slot = {GenKind::Ret, false, 0};
      ins.bytes = kind(rng) < 50 ? std::vector<std::uint8_t>{0xC3} : std::vector<std::uint8_t>{0xC2, 0x08, 0x00};
    }
    ins.kind = slot.kind;
    addr = ins.next();
    p.instructions.push_back(std::move(ins));
    slots.push_back(slot);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& ins = p.instructions[i];
    const Slot& slot = slots[i];
    if (slot.kind == GenKind::Plain || slot.kind == GenKind::Ret) continue;
    std::vector<std::uint32_t> candidates;
    for (const auto& t : p.instructions) {
      std::int64_t rel = std::int64_t{t.address} - std::int64_t{ins.next()};
      if (!slot.rel8 || (rel >= -128 && rel <= 127)) candidates.push_back(t.address);
    }
    std::uniform_int_distribution<std::size_t> choose(0, candidates.size() - 1);
    ins.target = candidates[choose(rng)];
    auto rel = static_cast<std::uint32_t>(ins.target - ins.next());
    ins.bytes.clear();
    if (slot.kind == GenKind::Jcc && slot.rel8) {
      ins.bytes = {static_cast<std::uint8_t>(0x70 + slot.cc), static_cast<std::uint8_t>(rel & 0xFF)};
    } else if (slot.kind == GenKind::Jcc) {
      ins.bytes = {0x0F, static_cast<std::uint8_t>(0x80 + slot.cc)};
      append32(ins.bytes, rel);
    } else if (slot.kind == GenKind::Jmp && slot.rel8) {
      ins.bytes = {0xEB, static_cast<std::uint8_t>(rel & 0xFF)};
    } else {
      ins.bytes = {static_cast<std::uint8_t>(slot.kind == GenKind::Jmp ? 0xE9 : 0xE8)};
      append32(ins.bytes, rel);
    }
  }
  return p;
}

std::size_t cfg_violations(const RandomProgram& program) {
  using namespace tadascope;
  std::size_t violations = 0;
  BinaryImage image = load_fixture(program.fixture());
  Disassembly d = disassemble_function(image, program.base);
  ControlFlowGraph cfg = build_cfg(d.instructions, program.base);

  std::set<Address> decoded;
  for (const auto& ins : d.instructions) {
    decoded.insert(ins.address);
    const auto* gen = program.at(ins.address);
    if (gen == nullptr || gen->bytes.size() != ins.length) ++violations;
  }
  if (decoded != program.reachable() || !d.decode_errors.empty()) ++violations;

  std::set<Address> covered;
  std::set<Address> starts;
  for (const auto& [start, block] : cfg.blocks()) {
    starts.insert(start);
    for (std::size_t i = 0; i < block.instructions.size(); ++i) {
      if (!covered.insert(block.instructions[i].address).second) ++violations;
      if (i > 0 && block.instructions[i - 1].next() != block.instructions[i].address) ++violations;
    }
    std::set<Address> succ(block.successors.begin(), block.successors.end());
    for (Address s : succ) {
      if (cfg.block_at(s) == nullptr) ++violations;
    }
    const auto* terminator = program.at(block.terminator().address);
    if (terminator == nullptr || succ != program.expected_successors(*terminator)) ++violations;
  }
  if (covered != decoded) ++violations;
  if (starts != program.expected_leaders()) ++violations;
  return violations;
}

}  // namespace testsupport
