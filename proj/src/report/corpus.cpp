#include "tadascope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tadascope {

std::string_view to_string(Tactic tactic) {
  switch (tactic) {
    case Tactic::DebuggerEvasion: return "DebuggerEvasion";
    case Tactic::SandboxEvasion: return "SandboxEvasion";
    case Tactic::VMEvasion: return "VMEvasion";
    case Tactic::AnalysisToolEvasion: return "AnalysisToolEvasion";
  }
  return "?";
}

std::string_view to_string(ImplementationKind kind) {
  switch (kind) {
    case ImplementationKind::Assembly: return "Assembly";
    case ImplementationKind::DirectAPI: return "DirectAPI";
    case ImplementationKind::IndirectAPI: return "IndirectAPI";
  }
  return "?";
}

namespace {

std::optional<Tactic> parse_tactic(std::string_view s) {
  for (auto t : {Tactic::DebuggerEvasion, Tactic::SandboxEvasion, Tactic::VMEvasion, Tactic::AnalysisToolEvasion}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<ImplementationKind> parse_kind(std::string_view s) {
  for (auto k : {ImplementationKind::Assembly, ImplementationKind::DirectAPI, ImplementationKind::IndirectAPI}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<Address> parse_address(const std::string& s) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used, 0);
    if (used != s.size() || v > 0xFFFFFFFFull) return std::nullopt;
    return static_cast<Address>(v);
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

}  // namespace

CorpusManifest parse_corpus_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  CorpusManifest manifest;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string keyword;
    if (!(fields >> keyword)) continue;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::ManifestError, "corpus manifest line " + std::to_string(line_no) + ": " + why);
    };
    if (keyword == "binary") {
      std::string path, kind, extra;
      if (!(fields >> path)) fail("binary needs a path");
      CorpusBinary b;
      b.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base_dir / path;
      b.fixture = b.path.extension() == ".fixture";
      if (fields >> kind) {
        if (kind == "fixture") {
          b.fixture = true;
        } else if (kind == "pe") {
          b.fixture = false;
        } else {
          fail("binary format must be fixture or pe, got '" + kind + "'");
        }
      }
      if (fields >> extra) fail("unexpected token '" + extra + "'");
      manifest.binaries.push_back(std::move(b));
    } else if (keyword == "impl") {
      if (manifest.binaries.empty()) fail("impl before any binary line");
      GroundTruthEntry e;
      std::string tactic, kind, str;
      if (!(fields >> e.id >> tactic >> kind >> str)) fail("impl needs <id> <tactic> <kind> <string|nostring>");
      if (!ids.insert(e.id).second) fail("duplicate implementation id '" + e.id + "'");
      auto t = parse_tactic(tactic);
      if (!t) fail("unknown tactic '" + tactic + "'");
      auto k = parse_kind(kind);
      if (!k) fail("unknown implementation kind '" + kind + "'");
      if (str != "string" && str != "nostring") fail("expected string or nostring, got '" + str + "'");
      e.tactic = *t;
      e.kind = *k;
      e.involves_string = str == "string";
      std::string range;
      while (fields >> range) {
        auto dash = range.find('-');
        if (dash == std::string::npos) fail("range '" + range + "' must be <start>-<end>");
        auto start = parse_address(range.substr(0, dash));
        auto end = parse_address(range.substr(dash + 1));
        if (!start || !end) fail("bad address in range '" + range + "'");
        if (*start >= *end) fail("empty range '" + range + "'");
        e.ranges.push_back({*start, *end});
      }
      if (e.ranges.empty()) fail("impl '" + e.id + "' has no ranges");
      std::sort(e.ranges.begin(), e.ranges.end(),
                [](const AddressRange& a, const AddressRange& b) { return a.start < b.start; });
      for (std::size_t i = 1; i < e.ranges.size(); ++i) {
        if (e.ranges[i].start < e.ranges[i - 1].end) fail("overlapping ranges in impl '" + e.id + "'");
      }
      e.binary_index = manifest.binaries.size() - 1;
      manifest.implementations.push_back(std::move(e));
    } else {
      fail("unknown keyword '" + keyword + "'");
    }
  }
  return manifest;
}

CorpusManifest load_corpus_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ManifestError, "cannot open corpus manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus_manifest(buf.str(), path.parent_path());
}

double DetectionRate::rate_percent() const {
  if (total == 0) return 0.0;
  return std::round(10000.0 * static_cast<double>(detected) / static_cast<double>(total)) / 100.0;
}

CorpusStats aggregate(const CorpusManifest& manifest, const std::vector<std::vector<Address>>& positives_per_binary) {
  CorpusStats stats;
  for (auto t : {Tactic::DebuggerEvasion, Tactic::SandboxEvasion, Tactic::VMEvasion, Tactic::AnalysisToolEvasion}) {
    stats.by_tactic[t];
  }
  for (auto k : {ImplementationKind::Assembly, ImplementationKind::DirectAPI, ImplementationKind::IndirectAPI}) {
    stats.by_kind[k];
  }
  static const std::vector<Address> kNone;
  auto positives_of = [&](std::size_t b) -> const std::vector<Address>& {
    return b < positives_per_binary.size() ? positives_per_binary[b] : kNone;
  };

  for (const auto& impl : manifest.implementations) {
    const auto& positives = positives_of(impl.binary_index);
    bool detected = std::any_of(positives.begin(), positives.end(), [&](Address a) {
      return std::any_of(impl.ranges.begin(), impl.ranges.end(), [&](const AddressRange& r) { return r.contains(a); });
    });
    for (DetectionRate* rate : {&stats.by_tactic[impl.tactic], &stats.by_kind[impl.kind],
                                impl.involves_string ? &stats.with_string : &stats.without_string, &stats.overall}) {
      ++rate->total;
      if (detected) ++rate->detected;
    }
    stats.implementations.push_back({impl.id, detected});
  }

  for (std::size_t b = 0; b < manifest.binaries.size(); ++b) {
    std::vector<const GroundTruthEntry*> impls;
    for (const auto& impl : manifest.implementations) {
      if (impl.binary_index == b) impls.push_back(&impl);
    }
    for (Address a : positives_of(b)) {
      bool attributed = std::any_of(impls.begin(), impls.end(), [&](const GroundTruthEntry* impl) {
        return std::any_of(impl->ranges.begin(), impl->ranges.end(),
                           [&](const AddressRange& r) { return r.contains(a); });
      });
      if (attributed) continue;
      if (impls.empty()) {
        ++stats.benign_positives;
      } else {
        ++stats.unattributed_positives;
      }
    }
  }
  return stats;
}

CorpusStats evaluate_corpus(const CorpusManifest& manifest, const AnalysisConfig& config) {
  std::vector<std::vector<Address>> positives;
  std::vector<BinaryOutcome> outcomes;
  for (const auto& binary : manifest.binaries) {
    AnalysisConfig per_binary = config;
    per_binary.force_fixture = binary.fixture;
    Report report = analyze(binary.path, per_binary);
    if (report.status == ReportStatus::Error && report.failure && report.failure->stage == "rating") {
      throw Error(report.failure->code, binary.path.string() + ": " + report.failure->message);
    }
    positives.push_back(report.positives);
    outcomes.push_back({binary.path.filename().string(), report.status, report.total_blocks, report.positives.size()});
  }
  CorpusStats stats = aggregate(manifest, positives);
  stats.binaries = std::move(outcomes);
  return stats;
}

namespace {

nlohmann::ordered_json rate_json(const DetectionRate& r) {
  return {{"detected", r.detected}, {"total", r.total}, {"rate_percent", r.rate_percent()}};
}

std::string rate_text(const DetectionRate& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%4zu / %-4zu %6.2f%%", r.detected, r.total, r.rate_percent());
  return buf;
}

}  // namespace

std::string emit_corpus_stats(const CorpusStats& stats, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json j;
    j["schema"] = "tadascope.corpus/1";
    nlohmann::ordered_json tactics, kinds;
    for (const auto& [t, r] : stats.by_tactic) tactics[std::string(to_string(t))] = rate_json(r);
    for (const auto& [k, r] : stats.by_kind) kinds[std::string(to_string(k))] = rate_json(r);
    j["by_tactic"] = tactics;
    j["by_kind"] = kinds;
    j["with_string"] = rate_json(stats.with_string);
    j["without_string"] = rate_json(stats.without_string);
    j["overall"] = rate_json(stats.overall);
    j["unattributed_positives"] = stats.unattributed_positives;
    j["benign_positives"] = stats.benign_positives;
    nlohmann::ordered_json impls = nlohmann::ordered_json::array();
    for (const auto& i : stats.implementations) impls.push_back({{"id", i.id}, {"detected", i.detected}});
    j["implementations"] = impls;
    nlohmann::ordered_json bins = nlohmann::ordered_json::array();
    for (const auto& b : stats.binaries) {
      bins.push_back({{"path", b.path},
                      {"status", std::string(to_string(b.status))},
                      {"total_blocks", b.total_blocks},
                      {"positives", b.positives}});
    }
    j["binaries"] = bins;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "tactic\n";
  for (const auto& [t, r] : stats.by_tactic) {
    out << "  " << std::string(to_string(t)) << std::string(22 - to_string(t).size(), ' ') << rate_text(r) << "\n";
  }
  out << "implementation\n";
  for (const auto& [k, r] : stats.by_kind) {
    out << "  " << std::string(to_string(k)) << std::string(22 - to_string(k).size(), ' ') << rate_text(r) << "\n";
  }
  out << "string involvement\n";
  out << "  with string           " << rate_text(stats.with_string) << "\n";
  out << "  without string        " << rate_text(stats.without_string) << "\n";
  out << "overall                 " << rate_text(stats.overall) << "\n";
  out << "positives outside ground truth: " << stats.unattributed_positives << " in labelled binaries, "
      << stats.benign_positives << " in benign binaries\n";
  for (const auto& i : stats.implementations) {
    out << "  " << (i.detected ? "[x] " : "[ ] ") << i.id << "\n";
  }
  return out.str();
}

}  // namespace tadascope
