#include <cstdint>
#include <cstdio>

#include "tadascope/api_features.hpp"
#include "tadascope/string_features.hpp"

namespace tadascope {

namespace {

bool is_segmented(const x86::Operand& op) {
  return op.segment_prefix && (*op.segment_prefix == x86::Segment::fs || *op.segment_prefix == x86::Segment::gs);
}

std::optional<Address> absolute_slot(const x86::Operand& op) {
  if (!op.is_absolute_memory() || is_segmented(op)) return std::nullopt;
  return static_cast<Address>(*op.displacement);
}

std::optional<std::string> import_at(const BinaryImage& image, Address slot) {
  if (const ImportEntry* e = image.imports().find_by_slot(slot)) return e->display_name();
  return std::nullopt;
}

ArgValue push_value(const x86::Instruction& push, std::size_t index, const ApiSignature* signature,
                    const BinaryImage& image) {
  const auto& op = push.operands[0];
  if (signature == nullptr || op.kind != x86::OperandKind::Immediate) return UnknownArg{};
  std::uint32_t value = op.immediate_value.value_or(0);
  auto it = signature->string_args.find(index);
  if (it != signature->string_args.end()) {
    auto encoding = it->second == StringWidth::Wide ? StringEncoding::Utf16le : StringEncoding::Ascii;
    if (auto s = read_string(image, value, encoding, 1)) return StringPtrArg{std::move(*s)};
  }
  return ImmediateArg{value};
}

}  // namespace

std::optional<std::string> resolve_direct_call(const x86::Instruction& call, const BinaryImage& image) {
  if (call.flow != x86::FlowKind::Call || call.operands.empty()) return std::nullopt;
  if (auto slot = absolute_slot(call.operands[0])) return import_at(image, *slot);
  if (!call.branch_target) return std::nullopt;
  if (auto name = import_at(image, *call.branch_target)) return name;
  // Import thunk: the target is `jmp [slot]`.
  auto thunk = x86::decode_at(image, *call.branch_target);
  if (thunk && thunk->mnemonic == "jmp" && !thunk->operands.empty()) {
    if (auto slot = absolute_slot(thunk->operands[0])) return import_at(image, *slot);
  }
  return std::nullopt;
}

std::optional<std::string> resolve_indirect_call(const x86::Instruction& call, const ControlFlowGraph& cfg,
                                                 const BinaryImage& image) {
  if (call.flow != x86::FlowKind::Call || call.operands.empty()) return std::nullopt;
  const auto& op = call.operands[0];
  if (op.kind != x86::OperandKind::Register || x86::gpr_width(op.reg) != 4) return std::nullopt;
  ValueSource v = trace_register_back(cfg, call.address, op.reg);
  if (const auto* load = std::get_if<LoadFromValue>(&v)) return import_at(image, load->address);
  return std::nullopt;
}

ArgumentRecovery recover_arguments(const ControlFlowGraph& cfg, Address call_site, const ApiSignature* signature,
                                   const BinaryImage& image) {
  ArgumentRecovery out;
  const BasicBlock* block = cfg.block_containing(call_site);
  if (block == nullptr) {
    out.insufficient_pushes = signature != nullptr && signature->arg_count > 0;
    return out;
  }
  const std::size_t wanted = signature != nullptr ? signature->arg_count : SIZE_MAX;
  std::vector<const x86::Instruction*> pushes;

  std::size_t index = 0;
  while (index < block->instructions.size() && block->instructions[index].address != call_site) ++index;
  auto collect = [&](const BasicBlock& b, std::size_t end) {
    for (std::size_t i = end; i > 0 && pushes.size() < wanted; --i) {
      const auto& ins = b.instructions[i - 1];
      if (ins.flow == x86::FlowKind::Call || ins.flow == x86::FlowKind::Return || ins.flow == x86::FlowKind::Halt) {
        return false;
      }
      if (ins.mnemonic == "push" && !ins.operands.empty()) pushes.push_back(&ins);
    }
    return true;
  };

  bool open = collect(*block, index);
  if (open && signature != nullptr && pushes.size() < wanted) {
    const auto& preds = cfg.predecessors(block->start());
    if (preds.size() == 1) {
      const BasicBlock* pred = cfg.block_at(preds.front());
      if (pred != nullptr) {
        auto flow = pred->terminator().flow;
        if (flow == x86::FlowKind::Sequential) {
          collect(*pred, pred->instructions.size());
        } else if (flow == x86::FlowKind::Jump || flow == x86::FlowKind::ConditionalJump) {
          collect(*pred, pred->instructions.size() - 1);
        }
      }
    }
  }

  for (std::size_t i = 0; i < pushes.size(); ++i) out.args.push_back(push_value(*pushes[i], i, signature, image));
  out.insufficient_pushes = signature != nullptr && pushes.size() < signature->arg_count;
  while (signature != nullptr && out.args.size() < signature->arg_count) out.args.push_back(UnknownArg{});
  return out;
}

std::string render_arg(const ArgValue& arg) {
  if (const auto* imm = std::get_if<ImmediateArg>(&arg)) {
    if (imm->value <= 4095) return std::to_string(imm->value);
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%X", imm->value);
    return buf;
  }
  if (const auto* s = std::get_if<StringPtrArg>(&arg)) return quote(s->text);
  return "<unknown>";
}

std::string render_api_feature(const ResolvedCall& call) {
  std::string out = "Called API: " + call.api + "(";
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    if (i != 0) out += ", ";
    out += render_arg(call.args[i]);
  }
  out += ")";
  return out;
}

std::map<Address, std::vector<ResolvedCall>> resolve_calls(const ControlFlowGraph& cfg, const BinaryImage& image,
                                                           const ApiKnowledgeBase& kb) {
  std::map<Address, std::vector<ResolvedCall>> out;
  for (const auto& [start, block] : cfg.blocks()) {
    for (const auto& ins : block.instructions) {
      if (ins.flow != x86::FlowKind::Call) continue;
      auto name = resolve_direct_call(ins, image);
      if (!name) name = resolve_indirect_call(ins, cfg, image);
      if (!name) continue;
      const ApiSignature* sig = kb.find(*name);
      auto recovered = recover_arguments(cfg, ins.address, sig, image);
      out[start].push_back(
          ResolvedCall{ins.address, *name, std::move(recovered.args), recovered.insufficient_pushes, block.id});
    }
  }
  return out;
}

std::map<Address, std::vector<Feature>> extract_api_features(const ControlFlowGraph& cfg, const BinaryImage& image,
                                                             const ApiKnowledgeBase& kb) {
  std::map<Address, std::vector<Feature>> out;
  for (const auto& [start, calls] : resolve_calls(cfg, image, kb)) {
    for (const auto& call : calls) {
      out[start].push_back({FeatureKind::ApiCall, render_api_feature(call), call.block_id, call.site});
    }
  }
  return out;
}

}  // namespace tadascope
