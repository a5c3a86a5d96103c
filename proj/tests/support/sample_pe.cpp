#include "sample_pe.hpp"

#include <fstream>

#include <unistd.h>

#include "pe_builder.hpp"

namespace testsupport {

std::vector<std::uint8_t> sample_pe(bool upx_sections) {
  PeSpec spec;
  spec.imports = synthetic_imports(5, 15);
  spec.imports.push_back({"kernel32.dll", {"IsDebuggerPresent", "ExitProcess"}});
  spec.sections.push_back({upx_sections ? "UPX0" : ".text", 0x1000, {}, kCode});
  spec.sections.push_back({upx_sections ? "UPX1" : ".data", 0x2000, std::vector<std::uint8_t>(16, 0), kData});

  std::uint32_t probe = build_pe(spec).iat_slots.at("IsDebuggerPresent");
  std::uint32_t exit = build_pe(spec).iat_slots.at("ExitProcess");
  auto le = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  // call [IsDebuggerPresent]; test eax, eax; jz done; push 1; call [ExitProcess]; done: ret
  std::vector<std::uint8_t> code = {0xFF, 0x15};
  le(code, probe);
  code.insert(code.end(), {0x85, 0xC0, 0x74, 0x08, 0x6A, 0x01, 0xFF, 0x15});
  le(code, exit);
  code.push_back(0xC3);
  spec.sections[0].data = code;
  return build_pe(spec).bytes;
}

std::filesystem::path write_temp_file(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  auto path = std::filesystem::temp_directory_path() / ("tadascope_" + std::to_string(::getpid()) + "_" + name);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path;
}

}  // namespace testsupport
