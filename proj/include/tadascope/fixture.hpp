#pragma once

#include <filesystem>
#include <string_view>

#include "tadascope/image.hpp"

namespace tadascope {

// Fixture manifests describe a raw code blob plus synthetic imports and data; see README
// ("Fixture manifest format") for the grammar.
//
//   base 0x401000
//   entry 0x401000
//   code_hex 55 8b ec          # may repeat; bytes are concatenated
//   import kernel32.dll IsDebuggerPresent 0x403000
//   import ws2_32.dll ordinal:23 0x403004
//   data_ascii 0x402000 "VirtualBox"
//   data_utf16 0x402020 "VMWare"
//   data_hex 0x402040 0c 33 28 2e

/// Throws Error{MalformedManifest}.
BinaryImage load_fixture(std::string_view manifest);
BinaryImage load_fixture_file(const std::filesystem::path& path);

}  // namespace tadascope
