#include "tadascope/fixture.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tadascope/error.hpp"

namespace tadascope {
namespace {

struct Token {
  std::string text;
  bool quoted = false;
};

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::MalformedManifest, "line " + std::to_string(line) + ": " + what);
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<Token> tokenize(std::string_view line, std::size_t line_no) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      break;
    } else if (c == '"') {
      Token t{"", true};
      ++i;
      bool closed = false;
      while (i < line.size()) {
        char d = line[i++];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d != '\\') {
          t.text.push_back(d);
          continue;
        }
        if (i >= line.size()) malformed(line_no, "dangling escape");
        char e = line[i++];
        switch (e) {
          case 'n': t.text.push_back('\n'); break;
          case 't': t.text.push_back('\t'); break;
          case '0': t.text.push_back('\0'); break;
          case '\\': t.text.push_back('\\'); break;
          case '"': t.text.push_back('"'); break;
          case 'x': {
            if (i + 2 > line.size()) malformed(line_no, "short \\x escape");
            int hi = hex_digit(line[i]), lo = hex_digit(line[i + 1]);
            if (hi < 0 || lo < 0) malformed(line_no, "bad \\x escape");
            t.text.push_back(static_cast<char>(hi * 16 + lo));
            i += 2;
            break;
          }
          default: malformed(line_no, std::string("unknown escape \\") + e);
        }
      }
      if (!closed) malformed(line_no, "unterminated string");
      tokens.push_back(std::move(t));
    } else {
      std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '#') ++i;
      tokens.push_back({std::string(line.substr(start, i - start)), false});
    }
  }
  return tokens;
}

Address parse_address(const Token& tok, std::size_t line_no) {
  std::string_view s = tok.text;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
  if (tok.quoted || ec != std::errc{} || ptr != s.data() + s.size() || value > 0xFFFFFFFFull) {
    malformed(line_no, "bad address '" + tok.text + "'");
  }
  return static_cast<Address>(value);
}

void append_hex(std::vector<std::uint8_t>& out, const std::vector<Token>& tokens, std::size_t first,
                std::size_t line_no) {
  for (std::size_t t = first; t < tokens.size(); ++t) {
    const std::string& s = tokens[t].text;
    if (tokens[t].quoted || s.size() % 2 != 0) malformed(line_no, "bad hex bytes '" + s + "'");
    for (std::size_t i = 0; i < s.size(); i += 2) {
      int hi = hex_digit(s[i]), lo = hex_digit(s[i + 1]);
      if (hi < 0 || lo < 0) malformed(line_no, "bad hex bytes '" + s + "'");
      out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
    }
  }
}

void expect_count(const std::vector<Token>& tokens, std::size_t n, std::size_t line_no) {
  if (tokens.size() != n) {
    malformed(line_no, "'" + tokens[0].text + "' expects " + std::to_string(n - 1) + " argument(s)");
  }
}

}  // namespace

BinaryImage load_fixture(std::string_view manifest) {
  std::optional<Address> base;
  std::optional<Address> entry;
  std::vector<std::uint8_t> code;
  std::vector<ImportEntry> imports;
  std::vector<Section> data_sections;

  auto add_data = [&](Address at, std::vector<std::uint8_t> bytes, std::size_t line_no) {
    if (bytes.empty()) malformed(line_no, "empty data");
    if (!data_sections.empty() && data_sections.back().end() == at) {
      auto& s = data_sections.back();
      s.data.insert(s.data.end(), bytes.begin(), bytes.end());
      s.size = static_cast<std::uint32_t>(s.data.size());
      return;
    }
    Section s;
    s.name = ".data";
    s.virtual_address = at;
    s.size = static_cast<std::uint32_t>(bytes.size());
    s.flags = section_flags::kReadable | section_flags::kWritable | section_flags::kInitializedData;
    s.data = std::move(bytes);
    data_sections.push_back(std::move(s));
  };

  std::istringstream in{std::string(manifest)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto tokens = tokenize(raw, line_no);
    if (tokens.empty()) continue;
    const std::string& key = tokens[0].text;
    if (key == "base") {
      expect_count(tokens, 2, line_no);
      base = parse_address(tokens[1], line_no);
    } else if (key == "entry") {
      expect_count(tokens, 2, line_no);
      entry = parse_address(tokens[1], line_no);
    } else if (key == "code_hex") {
      append_hex(code, tokens, 1, line_no);
    } else if (key == "import") {
      expect_count(tokens, 4, line_no);
      ImportEntry e;
      e.library = tokens[1].text;
      const std::string& sym = tokens[2].text;
      constexpr std::string_view kOrdinal = "ordinal:";
      if (sym.size() > kOrdinal.size() && sym.compare(0, kOrdinal.size(), kOrdinal) == 0) {
        Address ordinal = parse_address(Token{sym.substr(kOrdinal.size()), false}, line_no);
        if (ordinal > 0xFFFF) malformed(line_no, "ordinal out of range");
        e.ordinal = static_cast<std::uint16_t>(ordinal);
      } else {
        e.symbol = sym;
      }
      e.iat_slot = parse_address(tokens[3], line_no);
      imports.push_back(std::move(e));
    } else if (key == "data_hex") {
      if (tokens.size() < 3) malformed(line_no, "data_hex expects an address and bytes");
      std::vector<std::uint8_t> bytes;
      append_hex(bytes, tokens, 2, line_no);
      add_data(parse_address(tokens[1], line_no), std::move(bytes), line_no);
    } else if (key == "data_ascii" || key == "data_utf16") {
      expect_count(tokens, 3, line_no);
      if (!tokens[2].quoted) malformed(line_no, key + " expects a quoted string");
      std::vector<std::uint8_t> bytes;
      for (char c : tokens[2].text) {
        bytes.push_back(static_cast<std::uint8_t>(c));
        if (key == "data_utf16") bytes.push_back(0);
      }
      bytes.push_back(0);
      if (key == "data_utf16") bytes.push_back(0);
      add_data(parse_address(tokens[1], line_no), std::move(bytes), line_no);
    } else {
      malformed(line_no, "unknown key '" + key + "'");
    }
  }

  if (!base) throw Error(ErrorCode::MalformedManifest, "missing 'base'");
  if (code.empty()) throw Error(ErrorCode::MalformedManifest, "missing 'code_hex'");

  BinaryImage::Parts parts;
  parts.format_kind = FormatKind::RawFixture;
  parts.image_base = *base;
  parts.entry_point = entry.value_or(*base);
  Section text;
  text.name = ".text";
  text.virtual_address = *base;
  text.size = static_cast<std::uint32_t>(code.size());
  text.flags = section_flags::kExecutable | section_flags::kReadable;
  text.data = std::move(code);
  if (!text.contains(parts.entry_point)) {
    throw Error(ErrorCode::MalformedManifest, "entry lies outside the code bytes");
  }
  parts.sections.push_back(std::move(text));
  for (auto& s : data_sections) parts.sections.push_back(std::move(s));
  parts.imports = ImportTable(std::move(imports));

  if (auto problem = BinaryImage::validate(parts)) throw Error(ErrorCode::MalformedManifest, *problem);
  return BinaryImage(std::move(parts));
}

BinaryImage load_fixture_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_fixture(buffer.str());
}

}  // namespace tadascope
