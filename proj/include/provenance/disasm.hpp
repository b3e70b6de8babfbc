#pragma once

// Disassembly ingestion: run an objdump-compatible tool on an ARM ELF file
// and parse its listing into Instructions whose operands carry a
// source/destination role.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "provenance/elf.hpp"
#include "provenance/error.hpp"
#include "provenance/subprocess.hpp"

namespace provenance {

enum class Isa { Arm32, AArch64 };

inline std::string_view isa_name(Isa isa) { return isa == Isa::Arm32 ? "arm32" : "aarch64"; }

inline std::optional<Isa> parse_isa(std::string_view text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "arm32" || t == "arm" || t == "armv7" || t == "aarch32") return Isa::Arm32;
  if (t == "aarch64" || t == "arm64") return Isa::AArch64;
  return std::nullopt;
}

enum class OperandKind { Register, Immediate, MemoryRef, RegisterList, Label, Other };
enum class Role { Source, Destination, Both };

inline bool reads(Role r) { return r != Role::Destination; }
inline bool writes(Role r) { return r != Role::Source; }

/// Canonical general-purpose register token, e.g. "r3", "fp", "x29", "wzr".
struct RegisterName {
  std::string token;
  friend bool operator==(const RegisterName&, const RegisterName&) = default;
  friend auto operator<=>(const RegisterName&, const RegisterName&) = default;
};

struct Operand {
  OperandKind kind = OperandKind::Other;
  std::vector<RegisterName> registers;
  Role role = Role::Source;
  std::string text;
  bool writeback = false;  // "[sp, #8]!" or "r0!"
};

struct Instruction {
  std::uint64_t address = 0;
  std::string mnemonic;
  std::vector<Operand> operands;
};

// ---------------------------------------------------------------------------
// Registers

/// Layout order of the general-purpose register bins for an ISA.
inline const std::vector<std::string>& register_set(Isa isa) {
  static const std::vector<std::string> arm32 = {"r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7",
                                                 "r8", "r9", "r10", "fp", "ip", "sp", "lr", "pc"};
  static const std::vector<std::string> aarch64 = [] {
    std::vector<std::string> v;
    for (int i = 0; i <= 30; ++i) v.push_back("x" + std::to_string(i));
    for (int i = 0; i <= 30; ++i) v.push_back("w" + std::to_string(i));
    v.insert(v.end(), {"sp", "xzr", "wzr"});
    return v;
  }();
  return isa == Isa::Arm32 ? arm32 : aarch64;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline bool all_hex(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

// Parses "<prefix><n>" with 0 <= n <= max.
inline std::optional<int> numbered(std::string_view t, std::string_view prefix, int max) {
  if (!t.starts_with(prefix)) return std::nullopt;
  const auto digits = t.substr(prefix.size());
  if (!all_digits(digits) || digits.size() > 2 || (digits.size() == 2 && digits[0] == '0')) return std::nullopt;
  const int n = std::stoi(std::string(digits));
  if (n > max) return std::nullopt;
  return n;
}

}  // namespace detail

/// Maps a printed register token to its canonical general-purpose name.
/// Returns nullopt for anything that is not a general-purpose register
/// (FP/SIMD registers, system registers, condition names...).
inline std::optional<RegisterName> canonicalize_register(std::string_view token, Isa isa) {
  std::string t = detail::lower(detail::trim(token));
  if (!t.empty() && t.back() == '!') t.pop_back();
  if (isa == Isa::Arm32) {
    if (auto n = detail::numbered(t, "r", 15)) {
      static const std::array<const char*, 5> high = {"fp", "ip", "sp", "lr", "pc"};
      if (*n >= 11) return RegisterName{high[static_cast<std::size_t>(*n - 11)]};
      return RegisterName{t};
    }
    if (t == "fp" || t == "ip" || t == "sp" || t == "lr" || t == "pc") return RegisterName{t};
    if (t == "sl") return RegisterName{"r10"};
    if (t == "sb") return RegisterName{"r9"};
    return std::nullopt;
  }
  if (detail::numbered(t, "x", 30) || detail::numbered(t, "w", 30)) return RegisterName{t};
  if (t == "sp" || t == "wsp") return RegisterName{"sp"};
  if (t == "xzr" || t == "wzr") return RegisterName{t};
  if (t == "fp") return RegisterName{"x29"};
  if (t == "lr") return RegisterName{"x30"};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Operand syntax

namespace detail {

// Splits on commas that are not nested inside [] or {}.
inline std::vector<std::string> split_top_level(std::string_view text) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char c : text) {
    if (c == '[' || c == '{') ++depth;
    if (c == ']' || c == '}') depth = std::max(0, depth - 1);
    if (c == ',' && depth == 0) {
      parts.emplace_back(trim(cur));
      cur.clear();
      continue;
    }
    cur.push_back(c);
  }
  if (!trim(cur).empty() || !parts.empty()) parts.emplace_back(trim(cur));
  return parts;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

inline void push_register(std::vector<RegisterName>& out, std::string_view token, Isa isa) {
  std::string_view t = trim(token);
  while (!t.empty() && (t.front() == '-' || t.front() == '+')) t.remove_prefix(1);
  if (auto r = canonicalize_register(t, isa)) out.push_back(std::move(*r));
}

// "r4-r7" style ranges inside register lists (Arm32 only).
inline bool push_range(std::vector<RegisterName>& out, std::string_view piece, Isa isa) {
  const auto dash = piece.find('-');
  if (dash == std::string_view::npos || isa != Isa::Arm32) return false;
  const auto lo = canonicalize_register(piece.substr(0, dash), isa);
  const auto hi = canonicalize_register(piece.substr(dash + 1), isa);
  if (!lo || !hi) return false;
  const auto& set = register_set(isa);
  auto lo_it = std::find(set.begin(), set.end(), lo->token);
  auto hi_it = std::find(set.begin(), set.end(), hi->token);
  if (lo_it > hi_it) return false;
  for (auto it = lo_it; it <= hi_it; ++it) out.push_back(RegisterName{*it});
  return true;
}

}  // namespace detail

/// Syntactic classification of one printed operand. Role defaults to Source;
/// classify_operand_roles assigns the real role.
inline Operand parse_operand(std::string_view raw, Isa isa) {
  Operand op;
  const std::string text = detail::lower(detail::trim(raw));
  op.text = text;
  if (text.empty()) return op;

  if (text.front() == '[') {
    op.kind = OperandKind::MemoryRef;
    const auto close = text.find(']');
    const std::string_view inner =
        std::string_view(text).substr(1, close == std::string::npos ? std::string::npos : close - 1);
    if (close != std::string::npos && text.find('!', close) != std::string::npos) op.writeback = true;
    for (const auto& piece : detail::split_top_level(inner)) {
      const auto words = detail::split_words(piece);
      if (!words.empty()) detail::push_register(op.registers, words.front(), isa);
    }
    return op;
  }
  if (text.front() == '{') {
    op.kind = OperandKind::RegisterList;
    const auto close = text.find('}');
    const std::string_view inner =
        std::string_view(text).substr(1, close == std::string::npos ? std::string::npos : close - 1);
    for (const auto& piece : detail::split_top_level(inner)) {
      if (!detail::push_range(op.registers, piece, isa)) detail::push_register(op.registers, piece, isa);
    }
    return op;
  }
  if (text.front() == '#') {
    op.kind = OperandKind::Immediate;
    return op;
  }

  const auto words = detail::split_words(text);
  if (words.size() == 1) {
    std::string_view w = words.front();
    if (w.back() == '!') {
      op.writeback = true;
      w.remove_suffix(1);
    }
    if (auto r = canonicalize_register(w, isa)) {
      op.kind = OperandKind::Register;
      op.registers.push_back(std::move(*r));
      return op;
    }
    std::string_view num = w;
    if (num.starts_with("0x")) num.remove_prefix(2);
    if (detail::all_digits(num) || (w.starts_with("-") && detail::all_digits(w.substr(1)))) {
      op.kind = OperandKind::Immediate;
      return op;
    }
    if (detail::all_hex(num)) {
      op.kind = OperandKind::Label;
      return op;
    }
    return op;  // FP/SIMD or system register, condition name, barrier option...
  }
  // "8000 <main+0x10>" branch/literal targets
  if (words.size() >= 2 && words[1].front() == '<') {
    std::string_view num = words.front();
    if (num.starts_with("0x")) num.remove_prefix(2);
    if (detail::all_hex(num)) {
      op.kind = OperandKind::Label;
      return op;
    }
  }
  // Shifts and extends; "lsl r3" reads r3.
  for (std::size_t i = 1; i < words.size(); ++i) detail::push_register(op.registers, words[i], isa);
  detail::push_register(op.registers, words.front(), isa);
  return op;
}

// ---------------------------------------------------------------------------
// Role assignment

enum class MnemonicClass { Default, Store, Load, Compare, Branch, CoprocessorRead };

namespace detail {

inline bool is_condition(std::string_view s) {
  static constexpr std::array<std::string_view, 18> conds = {
      "", "eq", "ne", "cs", "hs", "cc", "lo", "mi", "pl", "vs", "vc", "hi", "ls", "ge", "lt", "gt", "le", "al"};
  return std::find(conds.begin(), conds.end(), s) != conds.end();
}

inline std::string_view strip_width(std::string_view m) {
  if (m.ends_with(".w") || m.ends_with(".n")) m.remove_suffix(2);
  return m;
}

inline bool is_branch(std::string_view m) {
  static constexpr std::array<std::string_view, 20> fixed = {
      "cbz",  "cbnz", "tbz",  "tbnz",  "br",    "blr",   "ret",    "eret",   "retaa", "retab",
      "braa", "brab", "braaz", "brabz", "blraa", "blrab", "blraaz", "blrabz", "tbb",   "tbh"};
  m = strip_width(m);
  if (std::find(fixed.begin(), fixed.end(), m) != fixed.end()) return true;
  if (m.starts_with("b.") || m.starts_with("bc.")) return true;
  for (std::string_view base : {"bxj", "blx", "bx", "bl", "b"}) {
    if (m.starts_with(base) && is_condition(m.substr(base.size()))) return true;
  }
  return false;
}

}  // namespace detail

inline MnemonicClass mnemonic_class(std::string_view mnemonic, Isa) {
  const std::string m = detail::lower(mnemonic);
  if (detail::is_branch(m)) return MnemonicClass::Branch;
  for (std::string_view p : {"cmp", "cmn", "tst", "teq", "ccmp", "ccmn", "fcmp", "fccmp", "vcmp"})
    if (m.starts_with(p)) return MnemonicClass::Compare;
  if (m.starts_with("st") || m.starts_with("push") || m.starts_with("vst") || m.starts_with("vpush"))
    return MnemonicClass::Store;
  if (m.starts_with("ld") || m.starts_with("pop") || m.starts_with("vld") || m.starts_with("vpop"))
    return MnemonicClass::Load;
  if (m.starts_with("mrc") || m.starts_with("mrrc")) return MnemonicClass::CoprocessorRead;
  return MnemonicClass::Default;
}

/// Assigns Source/Destination/Both to each operand from the mnemonic class:
///   default: first operand written, the rest read
///   store (st*, push): everything read; a writeback base is Both
///   load (ld*, pop): registers before the address are written; address
///     registers read (Both with writeback); a register list is written and
///     the ldm base register is an address register
///   compare/test and branches: everything read
///   coprocessor reads (mrc): core registers written
inline std::vector<Operand> classify_operand_roles(std::string_view mnemonic, std::vector<Operand> operands, Isa isa) {
  const MnemonicClass cls = mnemonic_class(mnemonic, isa);
  const auto address_role = [](const Operand& op) { return op.writeback ? Role::Both : Role::Source; };

  // A memory operand followed by an offset operand is post-indexed: the base is written back.
  for (std::size_t i = 0; i + 1 < operands.size(); ++i) {
    if (operands[i].kind == OperandKind::MemoryRef && (cls == MnemonicClass::Load || cls == MnemonicClass::Store) &&
        operands[i + 1].kind != OperandKind::MemoryRef)
      operands[i].writeback = true;
  }

  switch (cls) {
    case MnemonicClass::Compare:
    case MnemonicClass::Branch:
      for (auto& op : operands) op.role = Role::Source;
      break;
    case MnemonicClass::Store:
      for (auto& op : operands) op.role = address_role(op);
      for (auto& op : operands)
        if (op.kind == OperandKind::RegisterList) op.role = Role::Source;
      break;
    case MnemonicClass::Load: {
      const bool has_list = std::any_of(operands.begin(), operands.end(),
                                        [](const Operand& o) { return o.kind == OperandKind::RegisterList; });
      bool seen_address = false;
      for (auto& op : operands) {
        if (op.kind == OperandKind::MemoryRef) {
          op.role = address_role(op);
          seen_address = true;
        } else if (op.kind == OperandKind::RegisterList) {
          op.role = Role::Destination;
        } else if (op.kind == OperandKind::Register || op.kind == OperandKind::Other) {
          if (has_list)
            op.role = address_role(op);
          else
            op.role = seen_address ? Role::Source : Role::Destination;
        } else {
          op.role = Role::Source;
        }
      }
      break;
    }
    case MnemonicClass::CoprocessorRead:
      for (auto& op : operands) op.role = op.kind == OperandKind::Register ? Role::Destination : Role::Source;
      break;
    case MnemonicClass::Default:
      for (std::size_t i = 0; i < operands.size(); ++i) {
        auto& op = operands[i];
        const bool reg_like = op.kind == OperandKind::Register || op.kind == OperandKind::Other ||
                              op.kind == OperandKind::RegisterList;
        op.role = (i == 0 && reg_like) ? (op.writeback ? Role::Both : Role::Destination) : Role::Source;
      }
      break;
  }
  return operands;
}

// ---------------------------------------------------------------------------
// Listing grammar

namespace detail {

inline bool is_encoding_field(std::string_view field) {
  const auto groups = split_words(field);
  if (groups.empty()) return false;
  for (const auto& g : groups) {
    if (!all_hex(g) || (g.size() != 2 && g.size() != 4 && g.size() != 8)) return false;
  }
  return true;
}

inline bool all_zero_encoding(std::string_view field) {
  return std::all_of(field.begin(), field.end(), [](char c) { return c == '0' || std::isspace(static_cast<unsigned char>(c)); });
}

inline std::string_view strip_comment(std::string_view body, Isa isa) {
  std::size_t cut = body.find(';');
  const std::size_t marker = isa == Isa::Arm32 ? body.find('@') : body.find("//");
  cut = std::min(cut, marker);
  return cut == std::string_view::npos ? body : body.substr(0, cut);
}

}  // namespace detail

/// Parses one listing line. Returns nullopt for anything that is not an
/// instruction: headers, symbol labels, ellipses, data words.
inline std::optional<Instruction> parse_listing_line(std::string_view line, Isa isa) {
  std::string_view s = line;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  std::size_t i = 0;
  while (i < s.size() && std::isxdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0 || i > 16 || i >= s.size() || s[i] != ':') return std::nullopt;
  const std::uint64_t address = std::stoull(std::string(s.substr(0, i)), nullptr, 16);
  std::string_view body = detail::strip_comment(s.substr(i + 1), isa);

  std::vector<std::string> fields;
  if (body.find('\t') != std::string_view::npos) {
    std::string cur;
    for (char c : body) {
      if (c == '\t') {
        if (!detail::trim(cur).empty()) fields.emplace_back(detail::trim(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!detail::trim(cur).empty()) fields.emplace_back(detail::trim(cur));
  } else {
    // Space-only layout: "<enc> <mnemonic> <operands...>" with one encoding word.
    auto words = detail::split_words(body);
    if (words.size() < 2) return std::nullopt;
    fields.push_back(words[0]);
    std::string rest;
    for (std::size_t k = 1; k < words.size(); ++k) rest += (k > 1 ? " " : "") + words[k];
    fields.push_back(rest);
  }
  if (fields.size() < 2 || !detail::is_encoding_field(fields[0])) return std::nullopt;

  std::string mnemonic_field = fields[1];
  std::string operand_text;
  const auto space = mnemonic_field.find(' ');
  if (space != std::string::npos) {
    operand_text = std::string(detail::trim(std::string_view(mnemonic_field).substr(space + 1)));
    mnemonic_field.resize(space);
  }
  for (std::size_t k = 2; k < fields.size(); ++k) operand_text += (operand_text.empty() ? "" : " ") + fields[k];

  Instruction ins;
  ins.address = address;
  ins.mnemonic = detail::lower(mnemonic_field);
  if (ins.mnemonic.empty() || ins.mnemonic.front() == '.' || ins.mnemonic.front() == '<' ||
      ins.mnemonic.front() == '(' || ins.mnemonic == "undefined")
    return std::nullopt;
  if (ins.mnemonic == "udf" && detail::all_zero_encoding(fields[0])) return std::nullopt;  // zero-filled data pool

  std::vector<Operand> ops;
  if (!detail::trim(operand_text).empty()) {
    for (const auto& piece : detail::split_top_level(operand_text)) ops.push_back(parse_operand(piece, isa));
  }
  ins.operands = classify_operand_roles(ins.mnemonic, std::move(ops), isa);
  return ins;
}

inline std::vector<Instruction> parse_listing(std::string_view text, Isa isa) {
  std::vector<Instruction> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    if (auto ins = parse_listing_line(text.substr(pos, nl - pos), isa)) out.push_back(std::move(*ins));
    pos = nl + 1;
  }
  if (out.empty()) throw Error(ErrorCode::EmptyListing, "no instruction lines in listing");
  return out;
}

/// "mnemonic op1, op2" rendering used for round-trip checks and debugging.
inline std::string format_instruction(const Instruction& ins) {
  std::string s = ins.mnemonic;
  for (std::size_t i = 0; i < ins.operands.size(); ++i) s += (i == 0 ? "\t" : ", ") + ins.operands[i].text;
  return s;
}

// ---------------------------------------------------------------------------
// Obtaining listings

/// Command used to disassemble a binary. "{path}" in `arguments` is replaced
/// by the input path; if absent the path is appended.
struct DisassemblerConfig {
  std::string executable = "objdump";
  std::vector<std::string> arguments = {"-d", "{path}"};

  /// Default command; PROVENANCE_OBJDUMP overrides the executable.
  static DisassemblerConfig from_environment() {
    DisassemblerConfig cfg;
    if (const char* exe = std::getenv("PROVENANCE_OBJDUMP"); exe != nullptr && *exe != '\0') cfg.executable = exe;
    return cfg;
  }
};

struct Listing {
  Isa isa = Isa::Arm32;
  std::string text;
};

inline Isa isa_from_machine(std::uint16_t machine) {
  if (machine == elf::kMachineArm) return Isa::Arm32;
  if (machine == elf::kMachineAArch64) return Isa::AArch64;
  throw Error(ErrorCode::UnsupportedMachine, "ELF machine " + std::to_string(machine) + " is neither ARM nor AArch64");
}

/// Runs the configured disassembler on an ELF file. `isa` = nullopt means
/// detect from the ELF header.
inline Listing disassemble_binary(const std::filesystem::path& path, std::optional<Isa> isa = std::nullopt,
                                  const DisassemblerConfig& config = DisassemblerConfig::from_environment()) {
  const elf::Image image = elf::load(path);
  const Isa detected = isa_from_machine(image.machine);
  if (isa && *isa != detected)
    throw Error(ErrorCode::IsaMismatch, path.string() + " is " + std::string(isa_name(detected)));
  if (!image.has_executable_section()) throw Error(ErrorCode::NoExecutableSection, path.string());

  std::vector<std::string> argv{config.executable};
  bool substituted = false;
  for (const auto& a : config.arguments) {
    if (a == "{path}") {
      argv.push_back(path.string());
      substituted = true;
    } else {
      argv.push_back(a);
    }
  }
  if (!substituted) argv.push_back(path.string());

  ProcessResult res;
  int spawn_error = 0;
  if (!run_process(argv, res, spawn_error))
    throw Error(ErrorCode::DisassemblerUnavailable, "cannot run " + config.executable + ": " + std::strerror(spawn_error));
  if (res.exit_status != 0) {
    std::string detail = config.executable + " exited with status " + std::to_string(res.exit_status);
    if (!res.err.empty()) detail += ": " + std::string(detail::trim(res.err.substr(0, 400)));
    throw Error(ErrorCode::DisassemblerUnavailable, detail);
  }
  return Listing{detected, std::move(res.out)};
}

/// True for files that are treated as pre-made listings (.s, .txt, .lst, .dis).
inline bool is_listing_file(const std::filesystem::path& path) {
  const std::string ext = detail::lower(path.extension().string());
  return ext == ".s" || ext == ".txt" || ext == ".lst" || ext == ".dis";
}

/// Reads a listing file, or disassembles an ELF file. For listing files the
/// ISA comes from `isa` or from objdump's "file format" header line.
inline Listing obtain_listing(const std::filesystem::path& path, std::optional<Isa> isa = std::nullopt,
                              const DisassemblerConfig& config = DisassemblerConfig::from_environment()) {
  if (!is_listing_file(path)) return disassemble_binary(path, isa, config);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Listing listing{Isa::Arm32, ss.str()};
  if (isa) {
    listing.isa = *isa;
  } else if (listing.text.find("aarch64") != std::string::npos) {
    listing.isa = Isa::AArch64;
  } else if (listing.text.find("littlearm") != std::string::npos || listing.text.find("elf32-arm") != std::string::npos ||
             listing.text.find("bigarm") != std::string::npos) {
    listing.isa = Isa::Arm32;
  } else {
    throw Error(ErrorCode::InvalidArgument, "cannot tell the ISA of listing " + path.string() + "; pass --isa");
  }
  return listing;
}

}  // namespace provenance
