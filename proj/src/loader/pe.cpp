#include "tadascope/pe.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "tadascope/error.hpp"

namespace tadascope {
namespace {

constexpr std::uint16_t kMachineI386 = 0x014c;
constexpr std::uint16_t kOptionalMagicPe32 = 0x010b;
constexpr std::uint16_t kOptionalMagicPe32Plus = 0x020b;

constexpr std::uint32_t kScnCntCode = 0x00000020;
constexpr std::uint32_t kScnCntInitializedData = 0x00000040;
constexpr std::uint32_t kScnMemExecute = 0x20000000;
constexpr std::uint32_t kScnMemRead = 0x40000000;
constexpr std::uint32_t kScnMemWrite = 0x80000000;

constexpr std::size_t kMaxImportDescriptors = 4096;
constexpr std::size_t kMaxThunksPerLibrary = 65536;
constexpr std::size_t kMaxNameLength = 512;

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptHeader, what); }

class FileReader {
 public:
  explicit FileReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::uint64_t offset, std::uint64_t count) const {
    return offset <= bytes_.size() && count <= bytes_.size() - offset;
  }
  std::uint16_t u16(std::uint64_t offset) const {
    if (!has(offset, 2)) corrupt("header read past end of file at offset " + std::to_string(offset));
    return static_cast<std::uint16_t>(bytes_[offset] | (bytes_[offset + 1] << 8));
  }
  std::uint32_t u32(std::uint64_t offset) const {
    if (!has(offset, 4)) corrupt("header read past end of file at offset " + std::to_string(offset));
    return std::uint32_t{bytes_[offset]} | (std::uint32_t{bytes_[offset + 1]} << 8) |
           (std::uint32_t{bytes_[offset + 2]} << 16) | (std::uint32_t{bytes_[offset + 3]} << 24);
  }
  std::span<const std::uint8_t> slice(std::uint64_t offset, std::uint64_t count) const {
    if (!has(offset, count)) corrupt("range past end of file");
    return bytes_.subspan(offset, count);
  }

 private:
  std::span<const std::uint8_t> bytes_;
};

// Reads mapped image memory during import parsing, before the image is finalized.
class MappedReader {
 public:
  MappedReader(const std::vector<Section>& sections, Address image_base)
      : sections_(sections), image_base_(image_base) {}

  std::optional<std::uint8_t> byte_at_rva(std::uint32_t rva) const {
    Address va = image_base_ + rva;
    for (const auto& s : sections_) {
      if (s.contains(va)) {
        std::size_t off = va - s.virtual_address;
        return off < s.data.size() ? s.data[off] : std::uint8_t{0};
      }
    }
    return std::nullopt;
  }
  std::uint32_t u32_at_rva(std::uint32_t rva) const {
    std::uint32_t v = 0;
    for (std::uint32_t i = 0; i < 4; ++i) {
      auto b = byte_at_rva(rva + i);
      if (!b) corrupt("import data at RVA " + std::to_string(rva) + " is not mapped");
      v |= std::uint32_t{*b} << (8 * i);
    }
    return v;
  }
  std::string cstring_at_rva(std::uint32_t rva) const {
    std::string out;
    for (std::size_t i = 0; i < kMaxNameLength; ++i) {
      auto b = byte_at_rva(rva + static_cast<std::uint32_t>(i));
      if (!b) corrupt("import name at RVA " + std::to_string(rva) + " is not mapped");
      if (*b == 0) return out;
      out.push_back(static_cast<char>(*b));
    }
    corrupt("unterminated import name");
  }

 private:
  const std::vector<Section>& sections_;
  Address image_base_;
};

std::uint8_t translate_flags(std::uint32_t characteristics) {
  std::uint8_t flags = 0;
  if (characteristics & (kScnMemExecute | kScnCntCode)) flags |= section_flags::kExecutable;
  if (characteristics & kScnMemRead) flags |= section_flags::kReadable;
  if (characteristics & kScnMemWrite) flags |= section_flags::kWritable;
  if (characteristics & kScnCntInitializedData) flags |= section_flags::kInitializedData;
  return flags;
}

std::vector<ImportEntry> parse_imports(const MappedReader& mem, std::uint32_t dir_rva, Address image_base) {
  std::vector<ImportEntry> entries;
  if (dir_rva == 0) return entries;
  for (std::size_t d = 0; d < kMaxImportDescriptors; ++d) {
    std::uint32_t desc = dir_rva + static_cast<std::uint32_t>(d * 20);
    std::uint32_t original_first_thunk = mem.u32_at_rva(desc);
    std::uint32_t name_rva = mem.u32_at_rva(desc + 12);
    std::uint32_t first_thunk = mem.u32_at_rva(desc + 16);
    if (name_rva == 0 && first_thunk == 0) return entries;
    if (name_rva == 0 || first_thunk == 0) corrupt("import descriptor missing name or IAT");

    std::string library = mem.cstring_at_rva(name_rva);
    std::uint32_t lookup = original_first_thunk != 0 ? original_first_thunk : first_thunk;
    for (std::size_t i = 0; i < kMaxThunksPerLibrary; ++i) {
      std::uint32_t thunk = mem.u32_at_rva(lookup + static_cast<std::uint32_t>(i * 4));
      if (thunk == 0) break;
      ImportEntry entry;
      entry.library = library;
      entry.iat_slot = image_base + first_thunk + static_cast<std::uint32_t>(i * 4);
      if (thunk & 0x80000000u) {
        entry.ordinal = static_cast<std::uint16_t>(thunk & 0xFFFF);
      } else {
        entry.symbol = mem.cstring_at_rva(thunk + 2);  // skip the hint
      }
      entries.push_back(std::move(entry));
    }
  }
  corrupt("import directory is not terminated");
}

}  // namespace

BinaryImage parse_pe(std::span<const std::uint8_t> bytes) {
  FileReader file(bytes);
  if (bytes.size() < 2 || bytes[0] != 'M' || bytes[1] != 'Z') {
    throw Error(ErrorCode::NotPE, "missing MZ signature");
  }
  if (!file.has(0x3C, 4)) throw Error(ErrorCode::NotPE, "truncated DOS header");
  std::uint32_t pe_offset = file.u32(0x3C);
  if (!file.has(pe_offset, 4) || bytes[pe_offset] != 'P' || bytes[pe_offset + 1] != 'E' ||
      bytes[pe_offset + 2] != 0 || bytes[pe_offset + 3] != 0) {
    throw Error(ErrorCode::NotPE, "missing PE signature");
  }

  std::uint64_t coff = std::uint64_t{pe_offset} + 4;
  std::uint16_t machine = file.u16(coff);
  std::uint16_t section_count = file.u16(coff + 2);
  std::uint16_t optional_size = file.u16(coff + 16);
  std::uint64_t opt = coff + 20;
  std::uint16_t magic = file.u16(opt);
  if (magic == kOptionalMagicPe32Plus) throw Error(ErrorCode::UnsupportedArch, "PE32+ (64-bit) image");
  if (machine != kMachineI386) {
    throw Error(ErrorCode::UnsupportedArch, "machine type " + std::to_string(machine) + " is not i386");
  }
  if (magic != kOptionalMagicPe32) corrupt("unknown optional header magic " + std::to_string(magic));
  if (optional_size < 96) corrupt("optional header too small");

  BinaryImage::Parts parts;
  parts.format_kind = FormatKind::PE32;
  parts.image_base = file.u32(opt + 28);
  parts.entry_point = parts.image_base + file.u32(opt + 16);
  std::uint32_t dir_count = file.u32(opt + 92);
  std::uint32_t import_rva = 0;
  if (dir_count > 1 && optional_size >= 96 + 16) import_rva = file.u32(opt + 96 + 8);

  std::uint64_t table = opt + optional_size;
  if (!file.has(table, std::uint64_t{section_count} * 40)) corrupt("section table past end of file");
  for (std::uint16_t i = 0; i < section_count; ++i) {
    std::uint64_t h = table + std::uint64_t{i} * 40;
    auto raw_name = file.slice(h, 8);
    std::string name(raw_name.begin(), raw_name.end());
    name.erase(name.find_last_not_of('\0') + 1);
    std::uint32_t virtual_size = file.u32(h + 8);
    std::uint32_t rva = file.u32(h + 12);
    std::uint32_t raw_size = file.u32(h + 16);
    std::uint32_t raw_ptr = file.u32(h + 20);
    std::uint32_t characteristics = file.u32(h + 36);

    if (raw_size != 0 && !file.has(raw_ptr, raw_size)) {
      corrupt("section '" + name + "' extends past end of file");
    }
    Section s;
    s.name = std::move(name);
    s.virtual_address = parts.image_base + rva;
    s.size = virtual_size != 0 ? virtual_size : raw_size;
    s.flags = translate_flags(characteristics);
    if (s.size == 0) continue;
    std::uint32_t backed = std::min(raw_size, s.size);
    auto raw = file.slice(raw_ptr, backed);
    s.data.assign(raw.begin(), raw.end());
    parts.sections.push_back(std::move(s));
  }

  MappedReader mem(parts.sections, parts.image_base);
  parts.imports = ImportTable(parse_imports(mem, import_rva, parts.image_base));

  if (auto problem = BinaryImage::validate(parts)) corrupt(*problem);
  return BinaryImage(std::move(parts));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace tadascope
