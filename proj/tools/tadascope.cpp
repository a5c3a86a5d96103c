#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tadascope/corpus.hpp"
#include "tadascope/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitPacked = 2;
constexpr int kExitLoad = 3;
constexpr int kExitBackend = 4;

struct CommonOptions {
  std::string backend = "local";
  int threshold = 7;
  std::optional<std::string> out;
  std::string format = "json";
  std::string remote_url = tadascope::RemoteBackendOptions{}.base_url;
  std::string model = tadascope::RemoteBackendOptions{}.model;
  std::string api_key_env = tadascope::RemoteBackendOptions{}.api_key_env;
  int timeout_ms = 60000;
  int max_in_flight = 4;
  int retries = 3;
  int backoff_ms = 1000;
  std::optional<std::string> cache;
  std::optional<std::string> api_db;
  std::size_t threads = 0;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--backend", o.backend, "Rating backend")->check(CLI::IsMember({"local", "remote"}));
  cmd.add_option("--threshold", o.threshold, "Minimum rating counted as positive")->check(CLI::Range(0, 10));
  cmd.add_option("--out", o.out, "Write output to FILE instead of stdout");
  cmd.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "text"}));
  cmd.add_option("--remote-url", o.remote_url, "Base URL of an OpenAI-compatible API");
  cmd.add_option("--model", o.model, "Model name sent to the remote backend");
  cmd.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key");
  cmd.add_option("--timeout-ms", o.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);
  cmd.add_option("--max-in-flight", o.max_in_flight, "Concurrent backend requests")->check(CLI::Range(1, 64));
  cmd.add_option("--retries", o.retries, "Attempts per prompt")->check(CLI::Range(1, 100));
  cmd.add_option("--backoff-ms", o.backoff_ms, "Delay before the first retry, doubled each time")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--cache", o.cache, "JSONL response cache file");
  cmd.add_option("--api-db", o.api_db, "Extra API signature file merged over the builtin table");
  cmd.add_option("--threads", o.threads, "Extraction threads (0: hardware concurrency)");
}

struct Runtime {
  std::unique_ptr<tadascope::RatingBackend> backend;
  std::unique_ptr<tadascope::RatingCache> cache;
  std::optional<tadascope::ApiKnowledgeBase> api_db;
  tadascope::AnalysisConfig config;
};

std::unique_ptr<Runtime> make_runtime(const CommonOptions& o) {
  auto rt = std::make_unique<Runtime>();
  if (o.backend == "remote") {
    tadascope::RemoteBackendOptions remote;
    remote.base_url = o.remote_url;
    remote.model = o.model;
    remote.api_key_env = o.api_key_env;
    remote.timeout = std::chrono::milliseconds(o.timeout_ms);
    rt->backend = std::make_unique<tadascope::RemoteChatBackend>(remote);
  } else {
    rt->backend = std::make_unique<tadascope::LocalRuleBackend>();
  }
  if (o.cache) rt->cache = std::make_unique<tadascope::RatingCache>(*o.cache);
  if (o.api_db) {
    tadascope::ApiKnowledgeBase merged = tadascope::ApiKnowledgeBase::builtin();
    merged.merge(tadascope::ApiKnowledgeBase::load_file(*o.api_db));
    rt->api_db = std::move(merged);
    rt->config.api_db = &*rt->api_db;
  }
  rt->config.backend = rt->backend.get();
  rt->config.cache = rt->cache.get();
  rt->config.rating.threshold = o.threshold;
  rt->config.rating.request_timeout = std::chrono::milliseconds(o.timeout_ms);
  rt->config.rating.max_in_flight = static_cast<std::size_t>(o.max_in_flight);
  rt->config.rating.max_retries = o.retries;
  rt->config.rating.initial_backoff = std::chrono::milliseconds(o.backoff_ms);
  rt->config.rating.validate();
  rt->config.extraction_threads = o.threads;
  return rt;
}

bool write_output(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return true;
  }
  std::ofstream out(*path, std::ios::binary);
  out << text;
  if (!out) {
    std::fprintf(stderr, "tadascope: cannot write %s\n", path->c_str());
    return false;
  }
  return true;
}

tadascope::ReportFormat format_of(const CommonOptions& o) {
  return o.format == "text" ? tadascope::ReportFormat::Text : tadascope::ReportFormat::Json;
}

int exit_code_for(tadascope::ErrorCode code) {
  switch (code) {
    case tadascope::ErrorCode::NotPE:
    case tadascope::ErrorCode::CorruptHeader:
    case tadascope::ErrorCode::UnsupportedArch:
    case tadascope::ErrorCode::MalformedManifest:
    case tadascope::ErrorCode::ManifestError:
      return kExitLoad;
    case tadascope::ErrorCode::BackendUnavailable:
    case tadascope::ErrorCode::UnparsableResponse:
      return kExitBackend;
    default:
      return kExitFailure;
  }
}

int run_analyze(const std::string& input, bool fixture, const std::optional<std::string>& dump_dir,
                const CommonOptions& o) {
  auto rt = make_runtime(o);
  rt->config.force_fixture = fixture;
  if (dump_dir) rt->config.dump_prompts_dir = *dump_dir;
  tadascope::Report report = tadascope::analyze(input, rt->config);
  if (!write_output(o.out, tadascope::emit_report(report, format_of(o)))) return kExitFailure;
  switch (report.status) {
    case tadascope::ReportStatus::Ok: return kExitOk;
    case tadascope::ReportStatus::Packed: return kExitPacked;
    case tadascope::ReportStatus::Error:
      std::fprintf(stderr, "tadascope: %s failed: %s\n", report.failure->stage.c_str(), report.failure->message.c_str());
      if (report.failure->stage == "load") return kExitLoad;
      if (report.failure->stage == "rating") return kExitBackend;
      return kExitFailure;
  }
  return kExitFailure;
}

int run_evaluate(const std::string& manifest_path, const CommonOptions& o) {
  auto rt = make_runtime(o);
  auto manifest = tadascope::load_corpus_manifest(manifest_path);
  auto stats = tadascope::evaluate_corpus(manifest, rt->config);
  if (!write_output(o.out, tadascope::emit_corpus_stats(stats, format_of(o)))) return kExitFailure;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locate anti-dynamic-analysis code in x86-32 PE binaries"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tadascope 0.1.0");

  CommonOptions analyze_opts;
  std::string input;
  bool fixture = false;
  std::optional<std::string> dump_dir;
  auto* analyze = app.add_subcommand("analyze", "Analyze one binary and emit a breakpoint report");
  analyze->add_option("path", input, "PE file or .fixture manifest")->required();
  analyze->add_flag("--fixture", fixture, "Treat the input as a fixture manifest");
  analyze->add_option("--dump-prompts", dump_dir, "Write every rendered prompt into DIR");
  add_common(*analyze, analyze_opts);

  CommonOptions evaluate_opts;
  std::string manifest;
  auto* evaluate = app.add_subcommand("evaluate", "Measure detection rates over a labelled corpus");
  evaluate->add_option("manifest", manifest, "Corpus manifest")->required();
  add_common(*evaluate, evaluate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (analyze->parsed()) return run_analyze(input, fixture, dump_dir, analyze_opts);
    return run_evaluate(manifest, evaluate_opts);
  } catch (const tadascope::Error& e) {
    std::fprintf(stderr, "tadascope: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tadascope: %s\n", e.what());
    return kExitFailure;
  }
}
