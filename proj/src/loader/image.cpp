#include "tadascope/image.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace tadascope {

std::string_view to_string(FormatKind kind) {
  return kind == FormatKind::PE32 ? "PE32" : "RawFixture";
}

std::string ImportEntry::display_name() const {
  if (!symbol.empty()) return symbol;
  return "ordinal_" + std::to_string(ordinal.value_or(0));
}

ImportTable::ImportTable(std::vector<ImportEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const ImportEntry& a, const ImportEntry& b) { return a.iat_slot < b.iat_slot; });
}

const ImportEntry* ImportTable::find_by_slot(Address slot) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), slot,
                             [](const ImportEntry& e, Address s) { return e.iat_slot < s; });
  if (it == entries_.end() || it->iat_slot != slot) return nullptr;
  return &*it;
}

std::size_t ImportTable::library_count() const {
  std::set<std::string> names;
  for (const auto& e : entries_) {
    std::string lowered = e.library;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    names.insert(std::move(lowered));
  }
  return names.size();
}

std::optional<std::string> BinaryImage::validate(const Parts& parts) {
  std::vector<const Section*> sorted;
  for (const auto& s : parts.sections) {
    if (s.size == 0) return "section '" + s.name + "' has zero size";
    if (s.name.size() > 8) return "section name '" + s.name + "' longer than 8 bytes";
    if (s.end() > 0x1'0000'0000ULL) return "section '" + s.name + "' wraps the address space";
    sorted.push_back(&s);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const Section* a, const Section* b) { return a->virtual_address < b->virtual_address; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->end() > sorted[i]->virtual_address) {
      return "sections '" + sorted[i - 1]->name + "' and '" + sorted[i]->name + "' overlap";
    }
  }

  if (parts.format_kind == FormatKind::PE32) {
    bool in_exec = std::any_of(parts.sections.begin(), parts.sections.end(), [&](const Section& s) {
      return s.executable() && s.contains(parts.entry_point);
    });
    if (!in_exec) return "entry point is not inside an executable section";
  }

  std::set<Address> slots;
  for (const auto& e : parts.imports.entries()) {
    if (e.library.empty()) return "import with empty library name";
    if (e.symbol.empty() && !e.ordinal) return "import from '" + e.library + "' has no symbol or ordinal";
    if (!slots.insert(e.iat_slot).second) return "duplicate IAT slot for '" + e.display_name() + "'";
  }
  return std::nullopt;
}

BinaryImage::BinaryImage(Parts parts) : parts_(std::move(parts)) {
  std::sort(parts_.sections.begin(), parts_.sections.end(),
            [](const Section& a, const Section& b) { return a.virtual_address < b.virtual_address; });
}

const Section* BinaryImage::section_at(Address va) const {
  auto it = std::upper_bound(parts_.sections.begin(), parts_.sections.end(), va,
                             [](Address v, const Section& s) { return v < s.virtual_address; });
  if (it == parts_.sections.begin()) return nullptr;
  --it;
  return it->contains(va) ? &*it : nullptr;
}

bool BinaryImage::is_executable(Address va) const {
  const Section* s = section_at(va);
  return s != nullptr && s->executable();
}

std::optional<std::uint8_t> BinaryImage::byte_at(Address va) const {
  const Section* s = section_at(va);
  if (s == nullptr) return std::nullopt;
  std::size_t offset = va - s->virtual_address;
  return offset < s->data.size() ? s->data[offset] : std::uint8_t{0};
}

std::optional<std::uint32_t> BinaryImage::read_u32(Address va) const {
  std::uint32_t value = 0;
  for (std::uint32_t i = 0; i < 4; ++i) {
    if (va + i < va) return std::nullopt;
    auto b = byte_at(va + i);
    if (!b) return std::nullopt;
    value |= std::uint32_t{*b} << (8 * i);
  }
  return value;
}

std::span<const std::uint8_t> BinaryImage::bytes_from(Address va) const {
  const Section* s = section_at(va);
  if (s == nullptr) return {};
  std::size_t offset = va - s->virtual_address;
  if (offset >= s->data.size()) return {};
  return std::span(s->data).subspan(offset);
}

}  // namespace tadascope
