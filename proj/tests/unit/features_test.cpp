#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include "tadascope/asm_features.hpp"
#include "tadascope/fixture.hpp"
#include "tadascope/report.hpp"
#include "test_paths.hpp"

using namespace tadascope;
using testsupport::golden_dir;
using testsupport::read_text;

namespace {

struct Analyzed {
  BinaryImage image;
  ControlFlowGraph cfg;
};

Analyzed analyze_fixture(const std::filesystem::path& path) {
  BinaryImage image = load_fixture_file(path);
  Address entry = image.entry_point();
  ControlFlowGraph cfg = build_cfg(disassemble_function(image, entry).instructions, entry);
  return {std::move(image), std::move(cfg)};
}

std::string joined(const std::vector<Feature>& features, FeatureKind kind) {
  std::string out;
  for (const auto& f : features) {
    if (f.kind == kind) out += f.text + "\n";
  }
  return out;
}

}  // namespace

TEST(AugmentationTable, HasFifteenMnemonics) {
  const auto& table = default_augmentation_table().mnemonic_explanations;
  ASSERT_EQ(table.size(), 15u);
  EXPECT_EQ(table.at("pushf"), "Can be used to read/write EFLAGS register");
  EXPECT_EQ(table.at("popfq"), "Can be used to read/write EFLAGS register");
  EXPECT_EQ(table.at("int"), "CPU Interrupt");
  EXPECT_EQ(table.at("icebp"), "Tracing technique, Single Step Exception");
  EXPECT_EQ(table.at("bts"), "Set trap flag when number is exactly 8");
  EXPECT_EQ(table.at("sidt"), "Access Interupt Descriptor Table");
  EXPECT_EQ(table.at("str"), "Store Task Register");
}

TEST(AugmentationTable, HasTwentySixFsOffsets) {
  const auto& table = default_augmentation_table().segment_offsets;
  ASSERT_EQ(table.size(), 26u);
  for (const auto& [key, text] : table) EXPECT_EQ(key.first, x86::Segment::fs);
  EXPECT_EQ(table.at({x86::Segment::fs, 0x30}), "Linear address of Process Environment Block (PEB)");
  EXPECT_EQ(table.at({x86::Segment::fs, 0x44}), "Win32 client information (NT), user32 private data (Wine)");
  EXPECT_EQ(table.at({x86::Segment::fs, 0x6EC}), "Real Thread ID");
}

TEST(AsmFeatures, FormatOffset) {
  EXPECT_EQ(format_offset(0), "0h");
  EXPECT_EQ(format_offset(0x30), "30h");
  EXPECT_EQ(format_offset(0x1A4), "1A4h");
}

TEST(AsmFeatures, UnknownOffsetAndGsAreStillReported) {
  BinaryImage image = load_fixture("base 0x401000\ncode_hex 64 a1 50 00 00 00\ncode_hex 65 a1 14 00 00 00\ncode_hex c3\n");
  ControlFlowGraph cfg = build_cfg(disassemble_function(image, 0x401000).instructions, 0x401000);
  auto features = extract_asm_features(cfg.blocks().begin()->second);
  ASSERT_EQ(features.size(), 2u);
  EXPECT_EQ(features[0].text, "Segment Register Access: fs:50h (unknown field)");
  EXPECT_EQ(features[1].text, "Segment Register Access: gs:14h (unknown field)");
}

TEST(Golden, UncommonInstructionLines) {
  auto a = analyze_fixture(golden_dir() / "uncommon_ins.fixture");
  std::vector<Feature> all;
  for (const auto& [start, block] : a.cfg.blocks()) {
    auto f = extract_asm_features(block);
    all.insert(all.end(), f.begin(), f.end());
  }
  EXPECT_EQ(joined(all, FeatureKind::UncommonIns), read_text(golden_dir() / "feature_uncommon_ins.txt"));
}

TEST(Golden, SegmentAccessLines) {
  auto a = analyze_fixture(golden_dir() / "segment_access.fixture");
  ASSERT_EQ(a.cfg.blocks().size(), 1u);
  auto features = extract_asm_features(a.cfg.blocks().begin()->second);
  EXPECT_EQ(joined(features, FeatureKind::SegmentAccess), read_text(golden_dir() / "feature_segment_access.txt"));
}

TEST(Golden, StringReferenceLines) {
  auto a = analyze_fixture(golden_dir() / "string_reference.fixture");
  ASSERT_EQ(a.cfg.blocks().size(), 1u);
  auto features = extract_plain_strings(a.cfg.blocks().begin()->second, a.image);
  EXPECT_EQ(joined(features, FeatureKind::StringRef), read_text(golden_dir() / "feature_string_reference.txt"));
}

TEST(Golden, CalledApiLines) {
  auto a = analyze_fixture(golden_dir() / "called_api.fixture");
  std::vector<Feature> all;
  for (const auto& [start, features] : extract_api_features(a.cfg, a.image, ApiKnowledgeBase::builtin())) {
    all.insert(all.end(), features.begin(), features.end());
  }
  EXPECT_EQ(joined(all, FeatureKind::ApiCall), read_text(golden_dir() / "feature_called_api.txt"));
}

TEST(Golden, PromptTemplate) {
  Feature cpuid{FeatureKind::UncommonIns, "Uncommon INS: cpuid (Processor information)", {0x401000, 0x401000}, 0x401009};
  Prompt p = build_prompt(BlockId{0x401000, 0x401000}, std::vector<Feature>{cpuid});
  EXPECT_EQ(p.rendered, read_text(golden_dir() / "prompt_cpuid.txt"));
  EXPECT_EQ(build_prompt(BlockId{}, std::vector<Feature>{cpuid}).rendered, p.rendered);
  EXPECT_EQ(prompt_feature_lines(p.rendered), std::vector<std::string>{cpuid.text});
}

TEST(Prompt, EmptyFeatureListIsHeaderOnly) {
  Prompt p = build_prompt(BlockId{}, std::vector<std::string>{});
  EXPECT_EQ(p.rendered, std::string(prompt_header()) + "\n\n");
  EXPECT_TRUE(prompt_feature_lines(p.rendered).empty());
}

TEST(Prompt, DistinctFeatureListsRenderDistinctly) {
  std::vector<std::vector<std::string>> lists = {
      {}, {"a"}, {"b"}, {"a", "b"}, {"b", "a"}, {"a", "a"}, {"a - b"}, {"String Reference: \"x\""}};
  std::set<std::string> rendered;
  for (const auto& l : lists) rendered.insert(build_prompt(BlockId{}, l).rendered);
  EXPECT_EQ(rendered.size(), lists.size());
}

TEST(FeatureOrder, AssemblyThenStringsThenApis) {
  std::vector<Feature> f = {
      {FeatureKind::ApiCall, "api@1", {}, 1},       {FeatureKind::StringRef, "str@5", {}, 5},
      {FeatureKind::SegmentAccess, "seg@9", {}, 9}, {FeatureKind::UncommonIns, "ins@3", {}, 3},
      {FeatureKind::StringRef, "str@2", {}, 2},
  };
  sort_for_prompt(f);
  std::vector<std::string> order;
  for (const auto& x : f) order.push_back(x.text);
  EXPECT_EQ(order, (std::vector<std::string>{"ins@3", "seg@9", "str@2", "str@5", "api@1"}));
}

TEST(Strings, ReadStringBoundaries) {
  BinaryImage image = load_fixture(
      "base 0x401000\ncode_hex c3\ndata_ascii 0x402000 \"abc\"\ndata_utf16 0x402010 \"wide!\"\ndata_hex 0x402030 41 42 43 44\n");
  EXPECT_FALSE(read_string(image, 0x402000, StringEncoding::Ascii, 4));
  EXPECT_EQ(read_string(image, 0x402000, StringEncoding::Ascii, 3), "abc");
  auto wide = read_any_string(image, 0x402010, 4);
  ASSERT_TRUE(wide);
  EXPECT_EQ(wide->value, "wide!");
  EXPECT_EQ(wide->encoding, StringEncoding::Utf16le);
  EXPECT_FALSE(read_string(image, 0x402030, StringEncoding::Ascii, 1)) << "unterminated at end of mapping";
}

TEST(Strings, ControlCharactersEndRecovery) {
  // Feature lines never contain a newline, so the bullet list of a prompt stays unambiguous.
  BinaryImage image = load_fixture("base 0x401000\ncode_hex c3\ndata_hex 0x402000 41 42 43 0a 44 45 00\n");
  EXPECT_FALSE(read_string(image, 0x402000, StringEncoding::Ascii, 1));
}

TEST(Strings, EmulationTriggers) {
  auto loop = analyze_fixture(testsupport::fixtures_dir() / "tada" / "vm_vmware_xor.fixture");
  (void)loop;
  BinaryImage image = load_fixture_file(testsupport::fixtures_dir() / "tada" / "vm_vmware_xor.fixture");
  ControlFlowGraph check = build_cfg(disassemble_function(image, 0x401018).instructions, 0x401018);
  EXPECT_EQ(should_emulate(check, image).reason, EmulationReason::SingleBlockLoop);

  BinaryImage stack = load_fixture_file(testsupport::fixtures_dir() / "tada" / "tool_window_stack_string.fixture");
  ControlFlowGraph s = build_cfg(disassemble_function(stack, 0x401018).instructions, 0x401018);
  EXPECT_EQ(should_emulate(s, stack).reason, EmulationReason::ConsecutiveMovs);
  EmulationTriggerConfig strict;
  strict.min_consecutive_movs = 8;
  EXPECT_FALSE(should_emulate(s, stack, strict).emulate);

  auto plain = analyze_fixture(testsupport::fixtures_dir() / "benign" / "arith_straight_line.fixture");
  EXPECT_FALSE(should_emulate(plain.cfg, plain.image).emulate);
}

TEST(Strings, EmulationBudgetIsReported) {
  // jmp $
  BinaryImage image = load_fixture("base 0x401000\ncode_hex eb fe\n");
  ControlFlowGraph cfg = build_cfg(disassemble_function(image, 0x401000).instructions, 0x401000);
  EmulationTriggerConfig config;
  config.max_steps = 50;
  auto result = emulate_for_strings(cfg, image, config);
  EXPECT_TRUE(result.budget_exceeded);
  EXPECT_EQ(result.steps, 50u);
  EXPECT_TRUE(extract_string_features(cfg, image, config).budget_exceeded);
}

TEST(TriggerConfig, RejectsZero) {
  EmulationTriggerConfig c;
  c.min_string_length = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(EmulationTriggerConfig{}.validate());
}

// Independent decoders for the encoded payloads stored in the fixtures.
namespace {

std::vector<std::uint8_t> data_hex_at(const std::string& fixture, Address address) {
  std::istringstream in(fixture);
  std::string line;
  char prefix[32];
  std::snprintf(prefix, sizeof prefix, "data_hex 0x%X ", address);
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    std::istringstream bytes(line.substr(std::strlen(prefix)));
    std::vector<std::uint8_t> out;
    std::string b;
    while (bytes >> b) out.push_back(static_cast<std::uint8_t>(std::stoi(b, nullptr, 16)));
    return out;
  }
  return {};
}

std::string c_string(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  for (auto b : bytes) {
    if (b == 0) break;
    out += static_cast<char>(b);
  }
  return out;
}

}  // namespace

TEST(EmulationOracle, ReferenceDecodersAgreeWithCommittedPlaintext) {
  auto xored = data_hex_at(read_text(testsupport::fixtures_dir() / "tada" / "vm_vmware_xor.fixture"), 0x402000);
  for (auto& b : xored) b ^= 0x5A;
  EXPECT_EQ(c_string(xored), "VMware");

  auto rotated = data_hex_at(read_text(testsupport::fixtures_dir() / "tada" / "tool_addrot_process.fixture"), 0x402000);
  for (auto& b : rotated) b = static_cast<std::uint8_t>(((b << 3) | (b >> 5)) + 0x21);
  EXPECT_EQ(c_string(rotated), "wireshark.exe");
}

TEST(EmulationOracle, EveryDeobfuscationFixtureRecoversItsString) {
  std::istringstream oracle(read_text(testsupport::fixtures_dir() / "deobfuscation_oracle.tsv"));
  std::string line;
  int cases = 0;
  while (std::getline(oracle, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    std::string fixture = line.substr(0, tab), expected = line.substr(tab + 1);
    BinaryImage image = load_fixture_file(testsupport::fixtures_dir() / fixture);
    std::vector<std::string> recovered;
    for (Address entry : discover_functions(image)) {
      ControlFlowGraph cfg = build_cfg(disassemble_function(image, entry).instructions, entry);
      for (const auto& s : emulate_for_strings(cfg, image).strings) recovered.push_back(s.value);
    }
    EXPECT_NE(std::find(recovered.begin(), recovered.end(), expected), recovered.end())
        << fixture << " expected \"" << expected << "\"";
    ++cases;
  }
  EXPECT_EQ(cases, 5);
}
