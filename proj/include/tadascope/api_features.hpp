#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tadascope/dataflow.hpp"
#include "tadascope/feature.hpp"

namespace tadascope {

enum class StringWidth { Ansi, Wide };

struct ApiSignature {
  std::string name;
  std::string library;
  std::size_t arg_count = 0;
  std::map<std::size_t, StringWidth> string_args;  // argument index -> width
};

class ApiKnowledgeBase {
 public:
  /// Parses the signature text format; throws Error(MalformedManifest) with a line number on bad input.
  static ApiKnowledgeBase parse(std::string_view text);
  static ApiKnowledgeBase load_file(const std::filesystem::path& path);
  /// The curated set compiled into the library.
  static const ApiKnowledgeBase& builtin();

  /// Entries from other replace entries with the same name.
  void merge(const ApiKnowledgeBase& other);

  const ApiSignature* find(std::string_view name) const;
  std::size_t size() const { return signatures_.size(); }
  const std::map<std::string, ApiSignature, std::less<>>& signatures() const { return signatures_; }

 private:
  std::map<std::string, ApiSignature, std::less<>> signatures_;
};

struct ImmediateArg {
  std::uint32_t value = 0;
  bool operator==(const ImmediateArg&) const = default;
};
struct StringPtrArg {
  std::string text;
  bool operator==(const StringPtrArg&) const = default;
};
struct UnknownArg {
  bool operator==(const UnknownArg&) const = default;
};
using ArgValue = std::variant<ImmediateArg, StringPtrArg, UnknownArg>;

struct ArgumentRecovery {
  std::vector<ArgValue> args;
  bool insufficient_pushes = false;
};

struct ResolvedCall {
  Address site = 0;
  std::string api;
  std::vector<ArgValue> args;
  bool insufficient_pushes = false;
  BlockId block_id;
};

/// `call [slot]` on an IAT slot, `call slot`, or a direct call to a `jmp [slot]` thunk.
std::optional<std::string> resolve_direct_call(const x86::Instruction& call, const BinaryImage& image);

/// `call reg` whose register traces back to a load from an IAT slot.
std::optional<std::string> resolve_indirect_call(const x86::Instruction& call, const ControlFlowGraph& cfg,
                                                 const BinaryImage& image);

/// Walks back from the call collecting pushes (first found is argument 0), crossing at most into a
/// single predecessor block. With no signature, every push found before a barrier is used.
ArgumentRecovery recover_arguments(const ControlFlowGraph& cfg, Address call_site, const ApiSignature* signature,
                                   const BinaryImage& image);

std::string render_arg(const ArgValue& arg);
std::string render_api_feature(const ResolvedCall& call);

/// Resolved calls across the function, grouped by block start.
std::map<Address, std::vector<ResolvedCall>> resolve_calls(const ControlFlowGraph& cfg, const BinaryImage& image,
                                                           const ApiKnowledgeBase& kb);

std::map<Address, std::vector<Feature>> extract_api_features(const ControlFlowGraph& cfg, const BinaryImage& image,
                                                             const ApiKnowledgeBase& kb);

}  // namespace tadascope
