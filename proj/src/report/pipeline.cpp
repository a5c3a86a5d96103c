#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <thread>
#include <tuple>

#include "tadascope/asm_features.hpp"
#include "tadascope/fixture.hpp"
#include "tadascope/hash.hpp"
#include "tadascope/pe.hpp"
#include "tadascope/report.hpp"

namespace tadascope {

namespace {

struct FunctionResult {
  Address entry = 0;
  std::size_t blocks = 0;
  std::size_t decode_errors = 0;
  bool budget_exceeded = false;
  std::vector<std::pair<Address, std::vector<Feature>>> featured;  // block start -> features
};

FunctionResult extract_function(const BinaryImage& image, Address entry, const AnalysisConfig& config,
                                const ApiKnowledgeBase& kb) {
  FunctionResult out;
  out.entry = entry;
  Disassembly dis = disassemble_function(image, entry);
  out.decode_errors = dis.decode_errors.size();
  ControlFlowGraph cfg = build_cfg(dis.instructions, entry);
  out.blocks = cfg.blocks().size();

  FunctionStrings strings = extract_string_features(cfg, image, config.emulation);
  out.budget_exceeded = strings.budget_exceeded;
  auto apis = extract_api_features(cfg, image, kb);

  for (const auto& [start, block] : cfg.blocks()) {
    std::vector<Feature> features = extract_asm_features(block);
    if (auto it = strings.by_block.find(start); it != strings.by_block.end()) {
      features.insert(features.end(), it->second.begin(), it->second.end());
    }
    if (auto it = apis.find(start); it != apis.end()) {
      features.insert(features.end(), it->second.begin(), it->second.end());
    }
    if (features.empty()) continue;
    sort_for_prompt(features);
    out.featured.emplace_back(start, std::move(features));
  }
  return out;
}

std::vector<FunctionResult> extract_all(const BinaryImage& image, const std::vector<Address>& entries,
                                        const AnalysisConfig& config, const ApiKnowledgeBase& kb) {
  std::vector<FunctionResult> results(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1)) {
      try {
        results[i] = extract_function(image, entries[i], config, kb);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = config.extraction_threads != 0 ? config.extraction_threads
                                                       : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, entries.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

Report failure_report(Report report, std::string stage, const Error& e) {
  report.status = ReportStatus::Error;
  report.failure = ReportFailure{std::move(stage), e.code(), e.what()};
  report.records.clear();
  report.positives.clear();
  return report;
}

void dump_prompts(const std::filesystem::path& dir, const std::vector<Prompt>& prompts) {
  std::filesystem::create_directories(dir);
  for (const auto& p : prompts) {
    auto name = hex_address(p.block_id.function_entry) + "_" + hex_address(p.block_id.start) + ".prompt.txt";
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write prompt file " + (dir / name).string());
    out << p.rendered;
  }
}

}  // namespace

Report analyze_image(const BinaryImage& image, const AnalysisConfig& config, std::string input_name,
                     std::string input_digest) {
  LocalRuleBackend local;
  RatingBackend& backend = config.backend != nullptr ? *config.backend : local;
  const ApiKnowledgeBase& kb = config.api_db != nullptr ? *config.api_db : ApiKnowledgeBase::builtin();

  Report report;
  report.input_name = std::move(input_name);
  report.input_digest = std::move(input_digest);
  report.format = image.format_kind();
  report.backend_id = backend.id();
  report.threshold = config.rating.threshold;

  report.packing = detect_packing(image, config.packer);
  // Hand-built fixtures carry only the imports they exercise, so only packer signatures apply to them.
  if (image.format_kind() == FormatKind::RawFixture && report.packing.verdict == PackingVerdict::HeuristicPacked) {
    report.packing.verdict = PackingVerdict::NotPacked;
  }
  if (report.packing.verdict != PackingVerdict::NotPacked) {
    report.status = ReportStatus::Packed;
    return report;
  }

  std::vector<FunctionResult> functions;
  try {
    auto entries = discover_functions(image);
    report.total_functions = entries.size();
    functions = extract_all(image, entries, config, kb);
  } catch (const Error& e) {
    return failure_report(std::move(report), "disassembly", e);
  }

  std::vector<Prompt> prompts;
  std::vector<ReportRecord> records;
  for (auto& fn : functions) {
    report.total_blocks += fn.blocks;
    report.decode_errors += fn.decode_errors;
    if (fn.budget_exceeded) ++report.emulation_budget_hits;
    for (auto& [start, features] : fn.featured) {
      Prompt prompt = build_prompt(BlockId{fn.entry, start}, features);
      ReportRecord record;
      record.block = start;
      record.function = fn.entry;
      record.prompt_sha256 = sha256_hex(prompt.rendered);
      record.features = std::move(features);
      records.push_back(std::move(record));
      prompts.push_back(std::move(prompt));
    }
  }

  try {
    if (config.dump_prompts_dir) dump_prompts(*config.dump_prompts_dir, prompts);
  } catch (const Error& e) {
    return failure_report(std::move(report), "output", e);
  } catch (const std::filesystem::filesystem_error& e) {
    return failure_report(std::move(report), "output", Error(ErrorCode::Io, e.what()));
  }

  std::vector<RatingRecord> ratings;
  try {
    ratings = rate_all(prompts, backend, config.rating, config.cache);
  } catch (const Error& e) {
    return failure_report(std::move(report), "rating", e);
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].rating = ratings[i].rating;
    records[i].positive = ratings[i].positive;
    if (records[i].positive) report.positives.push_back(records[i].block);
  }
  std::sort(records.begin(), records.end(), [](const ReportRecord& a, const ReportRecord& b) {
    return std::tie(a.block, a.function) < std::tie(b.block, b.function);
  });
  std::sort(report.positives.begin(), report.positives.end());
  report.positives.erase(std::unique(report.positives.begin(), report.positives.end()), report.positives.end());
  report.records = std::move(records);
  return report;
}

Report analyze(const std::filesystem::path& path, const AnalysisConfig& config) {
  Report report;
  report.input_name = path.filename().string();
  report.threshold = config.rating.threshold;
  report.backend_id = config.backend != nullptr ? config.backend->id() : LocalRuleBackend{}.id();

  std::vector<std::uint8_t> bytes;
  std::optional<BinaryImage> image;
  try {
    bytes = read_file_bytes(path);
    report.input_digest = sha256_hex(bytes);
    bool fixture = config.force_fixture || path.extension() == ".fixture";
    if (fixture) {
      image.emplace(load_fixture(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    } else {
      image.emplace(parse_pe(bytes));
    }
  } catch (const Error& e) {
    return failure_report(std::move(report), "load", e);
  }
  return analyze_image(*image, config, report.input_name, report.input_digest);
}

}  // namespace tadascope
