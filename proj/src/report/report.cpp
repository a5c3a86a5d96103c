#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tadascope/report.hpp"

namespace tadascope {

std::string hex_address(Address a) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", a);
  return buf;
}

std::string_view to_string(ReportStatus status) {
  switch (status) {
    case ReportStatus::Ok: return "ok";
    case ReportStatus::Packed: return "packed";
    case ReportStatus::Error: return "error";
  }
  return "?";
}

namespace {

std::string emit_json(const Report& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = kReportSchema;
  j["input"] = {{"name", r.input_name},
                {"sha256", r.input_digest},
                {"format", r.format ? ordered_json(std::string(to_string(*r.format))) : ordered_json(nullptr)}};
  j["status"] = to_string(r.status);
  if (r.failure) {
    j["failure"] = {{"stage", r.failure->stage},
                    {"code", std::string(to_string(r.failure->code))},
                    {"message", r.failure->message}};
  } else {
    j["failure"] = nullptr;
  }
  j["packing"] = {{"verdict", std::string(to_string(r.packing.verdict))},
                  {"packer", r.packing.packer_name ? ordered_json(*r.packing.packer_name) : ordered_json(nullptr)},
                  {"libraries", r.packing.library_count},
                  {"functions", r.packing.function_count}};
  j["backend"] = r.backend_id;
  j["threshold"] = r.threshold;
  j["total_functions"] = r.total_functions;
  j["total_blocks"] = r.total_blocks;
  j["decode_errors"] = r.decode_errors;
  j["emulation_budget_hits"] = r.emulation_budget_hits;
  ordered_json records = ordered_json::array();
  for (const auto& rec : r.records) {
    ordered_json features = ordered_json::array();
    for (const auto& f : rec.features) {
      features.push_back({{"kind", std::string(to_string(f.kind))},
                          {"address", hex_address(f.source_address)},
                          {"text", f.text}});
    }
    records.push_back({{"block", hex_address(rec.block)},
                       {"function", hex_address(rec.function)},
                       {"rating", rec.rating},
                       {"positive", rec.positive},
                       {"prompt_sha256", rec.prompt_sha256},
                       {"features", std::move(features)}});
  }
  j["records"] = std::move(records);
  ordered_json positives = ordered_json::array();
  for (Address a : r.positives) positives.push_back(hex_address(a));
  j["positives"] = std::move(positives);
  return j.dump(2) + "\n";
}

std::string emit_text(const Report& r) {
  std::ostringstream out;
  out << "input      " << r.input_name << "\n";
  out << "sha256     " << r.input_digest << "\n";
  out << "status     " << to_string(r.status) << "\n";
  if (r.failure) {
    out << "failure    " << r.failure->stage << ": " << r.failure->message << "\n";
  }
  out << "packing    " << to_string(r.packing.verdict);
  if (r.packing.packer_name) out << " (" << *r.packing.packer_name << ")";
  out << ", " << r.packing.library_count << " libraries, " << r.packing.function_count << " imports\n";
  out << "backend    " << r.backend_id << ", threshold " << r.threshold << "\n";
  out << "functions  " << r.total_functions << "\n";
  out << "blocks     " << r.total_blocks << " (" << r.records.size() << " with features, " << r.positives.size()
      << " positive)\n";
  if (!r.positives.empty()) {
    out << "\nbreakpoints\n";
    for (Address a : r.positives) out << "  " << hex_address(a) << "\n";
  }
  if (!r.records.empty()) {
    out << "\n" << "block        function     rating  feature\n";
    for (const auto& rec : r.records) {
      char head[64];
      std::snprintf(head, sizeof head, "%-12s %-12s %2d%s", hex_address(rec.block).c_str(),
                    hex_address(rec.function).c_str(), rec.rating, rec.positive ? " * " : "   ");
      for (std::size_t i = 0; i < rec.features.size(); ++i) {
        out << (i == 0 ? std::string(head) : std::string(std::string_view(head).size(), ' ')) << "   "
            << rec.features[i].text << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace

std::string emit_report(const Report& report, ReportFormat format) {
  return format == ReportFormat::Json ? emit_json(report) : emit_text(report);
}

}  // namespace tadascope
