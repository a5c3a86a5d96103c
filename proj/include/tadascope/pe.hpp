#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tadascope/image.hpp"

namespace tadascope {

/// Parses a 32-bit x86 PE image. Throws Error{NotPE, CorruptHeader, UnsupportedArch}.
BinaryImage parse_pe(std::span<const std::uint8_t> bytes);

/// Reads a whole file; throws Error{Io}.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace tadascope
