#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tadascope {

using Address = std::uint32_t;

enum class FormatKind { PE32, RawFixture };

std::string_view to_string(FormatKind kind);

namespace section_flags {
inline constexpr std::uint8_t kExecutable = 0x1;
inline constexpr std::uint8_t kReadable = 0x2;
inline constexpr std::uint8_t kWritable = 0x4;
inline constexpr std::uint8_t kInitializedData = 0x8;
}  // namespace section_flags

struct Section {
  std::string name;
  Address virtual_address = 0;
  std::uint32_t size = 0;
  std::uint8_t flags = 0;
  // File-backed bytes; may be shorter than size (the remainder reads as zero).
  std::vector<std::uint8_t> data;

  bool executable() const { return (flags & section_flags::kExecutable) != 0; }
  bool contains(Address va) const {
    return va >= virtual_address && va - virtual_address < size;
  }
  // One past the last mapped address, widened so a section ending at 4 GiB is representable.
  std::uint64_t end() const { return std::uint64_t{virtual_address} + size; }
};

struct ImportEntry {
  std::string library;
  std::string symbol;  // empty when imported by ordinal only
  std::optional<std::uint16_t> ordinal;
  Address iat_slot = 0;

  /// Symbol name, or "ordinal_<n>" for ordinal-only imports.
  std::string display_name() const;
};

class ImportTable {
 public:
  ImportTable() = default;
  explicit ImportTable(std::vector<ImportEntry> entries);

  const std::vector<ImportEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const ImportEntry* find_by_slot(Address slot) const;

  /// Distinct library names, compared case-insensitively.
  std::size_t library_count() const;

 private:
  std::vector<ImportEntry> entries_;  // sorted by iat_slot
};

/// Immutable, validated view of a loaded image. Construct through parse_pe or load_fixture.
class BinaryImage {
 public:
  struct Parts {
    FormatKind format_kind = FormatKind::RawFixture;
    std::vector<Section> sections;
    ImportTable imports;
    Address entry_point = 0;
    Address image_base = 0;
  };

  /// Validates the image invariants; returns a description of the first violation.
  static std::optional<std::string> validate(const Parts& parts);

  /// Precondition: validate(parts) is empty.
  explicit BinaryImage(Parts parts);

  FormatKind format_kind() const { return parts_.format_kind; }
  const std::vector<Section>& sections() const { return parts_.sections; }
  const ImportTable& imports() const { return parts_.imports; }
  Address entry_point() const { return parts_.entry_point; }
  Address image_base() const { return parts_.image_base; }

  const Section* section_at(Address va) const;
  bool is_mapped(Address va) const { return section_at(va) != nullptr; }
  bool is_executable(Address va) const;

  std::optional<std::uint8_t> byte_at(Address va) const;
  std::optional<std::uint32_t> read_u32(Address va) const;

  /// File-backed bytes from va to the end of the section's data; empty if unmapped.
  std::span<const std::uint8_t> bytes_from(Address va) const;

 private:
  Parts parts_;  // sections sorted by virtual_address
};

}  // namespace tadascope
