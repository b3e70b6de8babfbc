#pragma once

// Minimal read-only ELF inspection: header, section table, symbol table.
// Enough to route a file to the right disassembler and to find the
// executable sections; no relocation or program-header processing.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "provenance/error.hpp"

namespace provenance::elf {

inline constexpr std::uint16_t kMachineArm = 40;
inline constexpr std::uint16_t kMachineAArch64 = 183;
inline constexpr std::uint64_t kSectionFlagExec = 0x4;
inline constexpr std::uint32_t kSectionTypeNoBits = 8;
inline constexpr std::uint32_t kSectionTypeSymtab = 2;

struct Section {
  std::string name;
  std::uint32_t type = 0;
  std::uint64_t flags = 0;
  std::uint64_t address = 0;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint32_t link = 0;
  std::uint64_t entry_size = 0;

  bool executable() const { return (flags & kSectionFlagExec) != 0; }
};

struct Symbol {
  std::string name;
  std::uint64_t value = 0;
  std::uint64_t size = 0;
  std::uint8_t info = 0;
  std::uint16_t section_index = 0;

  std::uint8_t type() const { return info & 0xf; }
};

struct Image {
  bool is_64bit = false;
  bool little_endian = true;
  std::uint16_t machine = 0;
  std::uint64_t entry = 0;
  std::uint32_t flags = 0;
  std::vector<Section> sections;
  std::vector<Symbol> symbols;
  std::vector<std::uint8_t> bytes;

  std::span<const std::uint8_t> contents(const Section& s) const {
    if (s.type == kSectionTypeNoBits || s.offset + s.size > bytes.size()) return {};
    return std::span<const std::uint8_t>(bytes).subspan(s.offset, s.size);
  }

  bool has_executable_section() const {
    for (const auto& s : sections)
      if (s.executable() && s.size > 0) return true;
    return false;
  }
};

namespace detail {

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, bool little_endian)
      : data_(data), little_(little_endian) {}

  bool fits(std::uint64_t offset, std::uint64_t width) const {
    return offset <= data_.size() && width <= data_.size() - offset;
  }

  std::uint64_t read(std::uint64_t offset, unsigned width) const {
    if (!fits(offset, width)) throw Error(ErrorCode::NotAnElf, "truncated ELF structure");
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      const unsigned shift = little_ ? 8 * i : 8 * (width - 1 - i);
      v |= static_cast<std::uint64_t>(data_[offset + i]) << shift;
    }
    return v;
  }

  std::string c_string(std::uint64_t offset, std::uint64_t limit) const {
    std::string out;
    while (offset < limit && offset < data_.size() && data_[offset] != 0)
      out.push_back(static_cast<char>(data_[offset++]));
    return out;
  }

 private:
  std::span<const std::uint8_t> data_;
  bool little_;
};

}  // namespace detail

inline bool has_elf_magic(std::span<const std::uint8_t> data) {
  return data.size() >= 4 && data[0] == 0x7f && data[1] == 'E' && data[2] == 'L' && data[3] == 'F';
}

inline Image parse(std::vector<std::uint8_t> bytes) {
  if (!has_elf_magic(bytes) || bytes.size() < 52) throw Error(ErrorCode::NotAnElf, "bad ELF magic");
  Image img;
  img.is_64bit = bytes[4] == 2;
  img.little_endian = bytes[5] != 2;
  if (bytes[4] != 1 && bytes[4] != 2) throw Error(ErrorCode::NotAnElf, "unknown ELF class");
  const detail::Reader r(bytes, img.little_endian);
  const bool w = img.is_64bit;
  img.machine = static_cast<std::uint16_t>(r.read(18, 2));
  img.entry = r.read(24, w ? 8 : 4);
  const std::uint64_t shoff = r.read(w ? 40 : 32, w ? 8 : 4);
  img.flags = static_cast<std::uint32_t>(r.read(w ? 48 : 36, 4));
  const std::uint64_t shentsize = r.read(w ? 58 : 46, 2);
  const std::uint64_t shnum = r.read(w ? 60 : 48, 2);
  const std::uint64_t shstrndx = r.read(w ? 62 : 50, 2);

  if (shoff != 0 && shnum != 0) {
    if (!r.fits(shoff, shentsize * shnum)) throw Error(ErrorCode::NotAnElf, "section table out of range");
    std::vector<std::uint64_t> name_offsets;
    for (std::uint64_t i = 0; i < shnum; ++i) {
      const std::uint64_t base = shoff + i * shentsize;
      Section s;
      s.type = static_cast<std::uint32_t>(r.read(base + 4, 4));
      s.flags = r.read(base + 8, w ? 8 : 4);
      s.address = r.read(base + (w ? 16 : 12), w ? 8 : 4);
      s.offset = r.read(base + (w ? 24 : 16), w ? 8 : 4);
      s.size = r.read(base + (w ? 32 : 20), w ? 8 : 4);
      s.link = static_cast<std::uint32_t>(r.read(base + (w ? 40 : 24), 4));
      s.entry_size = r.read(base + (w ? 56 : 36), w ? 8 : 4);
      name_offsets.push_back(r.read(base, 4));
      img.sections.push_back(std::move(s));
    }
    if (shstrndx < img.sections.size()) {
      const Section& strtab = img.sections[shstrndx];
      for (std::size_t i = 0; i < img.sections.size(); ++i)
        img.sections[i].name = r.c_string(strtab.offset + name_offsets[i], strtab.offset + strtab.size);
    }
    for (const auto& s : img.sections) {
      if (s.type != kSectionTypeSymtab || s.link >= img.sections.size()) continue;
      const Section& names = img.sections[s.link];
      const std::uint64_t entry = w ? 24 : 16;
      for (std::uint64_t off = 0; off + entry <= s.size; off += entry) {
        const std::uint64_t base = s.offset + off;
        if (!r.fits(base, entry)) break;
        Symbol sym;
        const std::uint64_t name_offset = r.read(base, 4);
        if (w) {
          sym.info = static_cast<std::uint8_t>(r.read(base + 4, 1));
          sym.section_index = static_cast<std::uint16_t>(r.read(base + 6, 2));
          sym.value = r.read(base + 8, 8);
          sym.size = r.read(base + 16, 8);
        } else {
          sym.value = r.read(base + 4, 4);
          sym.size = r.read(base + 8, 4);
          sym.info = static_cast<std::uint8_t>(r.read(base + 12, 1));
          sym.section_index = static_cast<std::uint16_t>(r.read(base + 14, 2));
        }
        sym.name = r.c_string(names.offset + name_offset, names.offset + names.size);
        img.symbols.push_back(std::move(sym));
      }
    }
  }
  img.bytes = std::move(bytes);
  return img;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Image load(const std::filesystem::path& path) { return parse(read_file(path)); }

}  // namespace provenance::elf
