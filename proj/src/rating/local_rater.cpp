#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "tadascope/rating.hpp"

namespace tadascope {

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

constexpr std::array<std::string_view, 52> kLexicon = {
    "vbox",          "virtualbox",     "vmware",         "qemu",        "xen",           "sandboxie",
    "sbiedll",       "cuckoo",         "wine_get_unix_file_name",       "ollydbg",       "x64dbg",
    "x32dbg",        "windbg",         "idaq",           "ida pro",     "immunity",      "wireshark",
    "procmon",       "procexp",        "process explorer",              "process monitor", "fiddler",
    "cheatengine",   "cheat engine",   "wpe pro",        "debugger",    "sandbox",       "vmtoolsd",
    "vboxservice",   "vboxtray",       "vmsrvc",         "vmusrvc",     "prl_tools",     "parallels",
    "win32_bios",    "select * from win32",              "mpreportevent", "mpvmp",       "syser",
    "softice",       "\\\\.\\sice",    "\\\\.\\ntice",   "filemon",     "regmon",        "tcpview",
    "autoruns",      "joebox",         "anubis",         "threatexpert", "hyper-v",      "virtual pc",
    "dbghelp",
};

constexpr std::array<std::string_view, 11> kArtifactPatterns = {
    "\\\\.\\",   "hardware\\", "system\\currentcontrolset\\services\\disk", "physicaldrive", "\\device\\",
    "scsi",     "ide\\",     "win32_",     "select ",  "acpi",  "bios",
};

// "c:", "c:\\" and the like.
bool is_drive_root(std::string_view lower) {
  if (lower.size() < 2 || lower.size() > 3) return false;
  if (lower[0] < 'a' || lower[0] > 'z' || lower[1] != ':') return false;
  return lower.size() == 2 || lower[2] == '\\';
}

const std::set<std::string, std::less<>>& direct_anti_apis() {
  static const std::set<std::string, std::less<>> s = {
      "IsDebuggerPresent",      "CheckRemoteDebuggerPresent", "NtQueryInformationProcess",
      "ZwQueryInformationProcess", "NtSetInformationThread", "ZwSetInformationThread",
      "NtQueryObject",          "OutputDebugStringA",         "OutputDebugStringW",
  };
  return s;
}

const std::set<std::string, std::less<>>& environment_apis() {
  static const std::set<std::string, std::less<>> s = {
      "GetVolumeInformationA", "GetVolumeInformationW", "GetComputerNameA",   "GetComputerNameW",
      "GetUserNameA",          "GetUserNameW",          "GetTickCount",       "GetTickCount64",
      "QueryPerformanceCounter", "Sleep",               "SleepEx",            "NtDelayExecution",
      "GetSystemInfo",         "GlobalMemoryStatusEx",  "GetDiskFreeSpaceExA", "GetDiskFreeSpaceExW",
      "CreateToolhelp32Snapshot", "Process32First",     "Process32Next",      "Process32FirstW",
      "Process32NextW",        "FindWindowA",           "FindWindowW",        "FindWindowExA",
      "FindWindowExW",         "GetCursorPos",          "GetSystemMetrics",   "GetAdaptersInfo",
      "RegOpenKeyExA",         "RegOpenKeyExW",         "RegQueryValueExA",   "RegQueryValueExW",
      "GetModuleHandleA",      "GetModuleHandleW",      "GetProcAddress",     "GetForegroundWindow",
      "EnumProcesses",         "timeGetTime",           "GetSystemTime",      "GetLocalTime",
      "GetThreadContext",      "SetUnhandledExceptionFilter", "BlockInput",   "NtQuerySystemInformation",
  };
  return s;
}

const std::set<std::string, std::less<>>& strong_mnemonics() {
  static const std::set<std::string, std::less<>> s = {"cpuid", "rdtsc", "sidt", "sgdt", "sldt", "str", "icebp"};
  return s;
}

bool closes_quote(std::string_view line, std::size_t quote_pos) {
  std::size_t next = quote_pos + 1;
  return next == line.size() || line[next] == ',' || line[next] == ')';
}

// Quoted segments of a feature line, with \" unescaped. Backslashes are not escaped by the renderer, so a
// \" that is followed by a delimiter is read as a literal backslash closing the string ("C:\").
std::vector<std::string> quoted_strings(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] != '"') {
      ++i;
      continue;
    }
    std::string value;
    ++i;
    while (i < line.size() && line[i] != '"') {
      if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == '"' && !closes_quote(line, i + 1)) ++i;
      value += line[i++];
    }
    ++i;
    out.push_back(std::move(value));
  }
  return out;
}

}  // namespace

bool matches_tada_lexicon(std::string_view text) {
  std::string lower = lowercase(text);
  return std::any_of(kLexicon.begin(), kLexicon.end(),
                     [&](std::string_view word) { return lower.find(word) != std::string::npos; });
}

bool matches_artifact_pattern(std::string_view text) {
  std::string lower = lowercase(text);
  if (is_drive_root(lower)) return true;
  return std::any_of(kArtifactPatterns.begin(), kArtifactPatterns.end(),
                     [&](std::string_view word) { return lower.find(word) != std::string::npos; });
}

int score_feature_line(std::string_view line) {
  constexpr std::string_view kApi = "Called API: ";
  constexpr std::string_view kIns = "Uncommon INS: ";
  constexpr std::string_view kSeg = "Segment Register Access: ";
  constexpr std::string_view kStr = "String Reference: ";

  if (starts_with(line, kApi)) {
    std::string_view rest = line.substr(kApi.size());
    std::string_view name = rest.substr(0, rest.find('('));
    if (direct_anti_apis().count(name) != 0) return 10;
    int score = environment_apis().count(name) != 0 ? 3 : 2;
    for (const auto& arg : quoted_strings(rest)) {
      if (matches_tada_lexicon(arg)) return 9;
      if (matches_artifact_pattern(arg)) score = std::max(score, 8);
    }
    return score;
  }
  if (starts_with(line, kIns)) {
    std::string_view rest = line.substr(kIns.size());
    std::string_view mnemonic = rest.substr(0, rest.find_first_of(" ("));
    return strong_mnemonics().count(mnemonic) != 0 ? 9 : 7;
  }
  if (starts_with(line, kSeg)) {
    std::string_view rest = line.substr(kSeg.size());
    if (starts_with(rest, "fs:30h") || starts_with(rest, "fs:18h")) return 9;
    return 7;
  }
  if (starts_with(line, kStr)) {
    for (const auto& s : quoted_strings(line.substr(kStr.size()))) {
      if (matches_tada_lexicon(s)) return 9;
    }
    return 1;
  }
  return 0;
}

int local_rule_rating(const std::vector<std::string>& feature_lines) {
  int rating = 0;
  for (const auto& line : feature_lines) rating = std::max(rating, score_feature_line(line));
  return rating;
}

std::string LocalRuleBackend::complete(const std::string& prompt) {
  return std::to_string(local_rule_rating(prompt_feature_lines(prompt)));
}

}  // namespace tadascope
