// arm-objdump: prints a GNU "objdump -d"-style listing of the executable
// sections of an ARM or AArch64 ELF file. Decoding is done by the MC
// disassembler in the system's libLLVM, loaded at run time.
//
//   arm-objdump -d FILE

#include <dlfcn.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "provenance/elf.hpp"

namespace {

using DisasmContext = void*;
using CreateDisasmCPU = DisasmContext (*)(const char*, const char*, void*, int, void*, void*);
using DisasmInstruction = std::size_t (*)(DisasmContext, std::uint8_t*, std::uint64_t, std::uint64_t, char*, std::size_t);
using Init = void (*)();

struct Llvm {
  CreateDisasmCPU create = nullptr;
  DisasmInstruction disasm = nullptr;
};

bool load_llvm(Llvm& out, std::string& why) {
  std::vector<std::string> candidates;
  if (const char* e = std::getenv("PROVENANCE_LIBLLVM"); e != nullptr && *e != '\0') candidates.emplace_back(e);
  for (const char* c : {"libLLVM.so", "libLLVM-18.so.1", "libLLVM-17.so.1", "libLLVM-16.so.1", "libLLVM-15.so.1",
                        "libLLVM-14.so.1", "libLLVM-14.so", "libLLVM-13.so.1"})
    candidates.emplace_back(c);
  void* handle = nullptr;
  for (const auto& c : candidates)
    if ((handle = dlopen(c.c_str(), RTLD_NOW | RTLD_LOCAL)) != nullptr) break;
  if (handle == nullptr) {
    why = "no libLLVM shared library found (set PROVENANCE_LIBLLVM)";
    return false;
  }
  for (const char* init : {"LLVMInitializeARMTargetInfo", "LLVMInitializeARMTargetMC", "LLVMInitializeARMDisassembler",
                           "LLVMInitializeAArch64TargetInfo", "LLVMInitializeAArch64TargetMC",
                           "LLVMInitializeAArch64Disassembler"}) {
    auto fn = reinterpret_cast<Init>(dlsym(handle, init));
    if (fn == nullptr) {
      why = std::string("libLLVM lacks ") + init;
      return false;
    }
    fn();
  }
  out.create = reinterpret_cast<CreateDisasmCPU>(dlsym(handle, "LLVMCreateDisasmCPU"));
  out.disasm = reinterpret_cast<DisasmInstruction>(dlsym(handle, "LLVMDisasmInstruction"));
  if (out.create == nullptr || out.disasm == nullptr) {
    why = "libLLVM lacks the disassembler C API";
    return false;
  }
  return true;
}

enum class Mode { Arm, Thumb, Data, A64 };

// Mapping symbols ($a, $t, $d, $x) sorted by address within one section.
std::map<std::uint64_t, Mode> mapping_symbols(const provenance::elf::Image& img, std::size_t section_index) {
  std::map<std::uint64_t, Mode> m;
  for (const auto& s : img.symbols) {
    if (s.section_index != section_index || s.name.size() < 2 || s.name[0] != '$') continue;
    if (s.name.size() > 2 && s.name[2] != '.') continue;
    switch (s.name[1]) {
      case 'a': m[s.value] = Mode::Arm; break;
      case 't': m[s.value] = Mode::Thumb; break;
      case 'd': m[s.value] = Mode::Data; break;
      case 'x': m[s.value] = Mode::A64; break;
      default: break;
    }
  }
  return m;
}

std::map<std::uint64_t, std::string> function_labels(const provenance::elf::Image& img, std::size_t section_index) {
  std::map<std::uint64_t, std::string> m;
  for (const auto& s : img.symbols) {
    if (s.section_index != section_index || s.name.empty() || s.name[0] == '$') continue;
    if (s.type() != 2 && s.type() != 0) continue;  // STT_FUNC or STT_NOTYPE
    m.emplace(s.value & ~std::uint64_t{1}, s.name);
  }
  return m;
}

std::uint32_t read_le(const std::uint8_t* p, int n) {
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

int dump(const char* path, const Llvm& llvm) {
  provenance::elf::Image img;
  try {
    img = provenance::elf::load(path);
  } catch (const std::exception&) {
    std::fprintf(stderr, "arm-objdump: %s: file format not recognized\n", path);
    return 1;
  }
  const bool a64 = img.machine == provenance::elf::kMachineAArch64;
  if (!a64 && img.machine != provenance::elf::kMachineArm) {
    std::fprintf(stderr, "arm-objdump: %s: unsupported machine %u\n", path, img.machine);
    return 1;
  }
  DisasmContext arm = nullptr;
  DisasmContext thumb = nullptr;
  DisasmContext aarch64 = nullptr;
  if (a64) {
    aarch64 = llvm.create("aarch64-none-elf", "", nullptr, 0, nullptr, nullptr);
  } else {
    arm = llvm.create("armv7a-none-eabi", "", nullptr, 0, nullptr, nullptr);
    thumb = llvm.create("thumbv7a-none-eabi", "", nullptr, 0, nullptr, nullptr);
  }
  if ((a64 && aarch64 == nullptr) || (!a64 && (arm == nullptr || thumb == nullptr))) {
    std::fprintf(stderr, "arm-objdump: cannot create disassembler\n");
    return 2;
  }

  std::printf("\n%s:     file format %s\n\n", path, a64 ? "elf64-littleaarch64" : "elf32-littlearm");
  const Mode default_mode = a64 ? Mode::A64 : ((img.entry & 1) ? Mode::Thumb : Mode::Arm);
  char text[256];
  for (std::size_t si = 0; si < img.sections.size(); ++si) {
    const auto& sec = img.sections[si];
    if (!sec.executable() || sec.type == provenance::elf::kSectionTypeNoBits || sec.size == 0) continue;
    auto bytes = img.contents(sec);
    if (bytes.empty()) continue;
    std::vector<std::uint8_t> buf(bytes.begin(), bytes.end());
    std::printf("\nDisassembly of section %s:\n", sec.name.c_str());
    const auto maps = mapping_symbols(img, si);
    const auto labels = function_labels(img, si);
    std::uint64_t off = 0;
    while (off < buf.size()) {
      const std::uint64_t addr = sec.address + off;
      if (auto l = labels.find(addr); l != labels.end()) std::printf("\n%08llx <%s>:\n", static_cast<unsigned long long>(addr), l->second.c_str());
      Mode mode = default_mode;
      if (auto it = maps.upper_bound(addr); it != maps.begin()) mode = std::prev(it)->second;
      const std::size_t left = buf.size() - off;
      std::uint8_t* p = buf.data() + off;
      if (mode == Mode::Data || left < 2 || (mode != Mode::Thumb && left < 4)) {
        const int n = left >= 4 ? 4 : static_cast<int>(left);
        const std::uint32_t w = read_le(p, n);
        std::printf("%8llx:\t%0*x \t.%s\t0x%0*x\n", static_cast<unsigned long long>(addr), 2 * n, w,
                    n == 4 ? "word" : (n == 2 ? "short" : "byte"), 2 * n, w);
        off += static_cast<std::uint64_t>(n);
        continue;
      }
      DisasmContext ctx = mode == Mode::Thumb ? thumb : (mode == Mode::A64 ? aarch64 : arm);
      text[0] = '\0';
      const std::size_t n = llvm.disasm(ctx, p, left, addr, text, sizeof text);
      if (n == 0) {
        const int width = mode == Mode::Thumb ? 2 : 4;
        const std::uint32_t w = read_le(p, width);
        std::printf("%8llx:\t%0*x \t.inst\t0x%0*x ; undefined\n", static_cast<unsigned long long>(addr), 2 * width, w,
                    2 * width, w);
        off += static_cast<std::uint64_t>(width);
        continue;
      }
      std::string enc;
      char hex[16];
      if (mode == Mode::Thumb) {
        for (std::size_t h = 0; h < n; h += 2) {
          std::snprintf(hex, sizeof hex, "%s%04x", h ? " " : "", read_le(p + h, 2));
          enc += hex;
        }
      } else {
        std::snprintf(hex, sizeof hex, "%08x", read_le(p, 4));
        enc = hex;
      }
      const char* body = text;
      while (*body == '\t' || *body == ' ') ++body;
      std::printf("%8llx:\t%s \t%s\n", static_cast<unsigned long long>(addr), enc.c_str(), body);
      off += n;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<const char*> files;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-d" || a == "--disassemble") continue;
    if (a == "-h" || a == "--help") {
      std::printf("usage: arm-objdump -d FILE...\n");
      return 0;
    }
    if (!a.empty() && a[0] == '-') {
      std::fprintf(stderr, "arm-objdump: unrecognized option '%s'\n", a.c_str());
      return 1;
    }
    files.push_back(argv[i]);
  }
  if (files.empty()) {
    std::fprintf(stderr, "usage: arm-objdump -d FILE...\n");
    return 1;
  }
  Llvm llvm;
  std::string why;
  if (!load_llvm(llvm, why)) {
    std::fprintf(stderr, "arm-objdump: %s\n", why.c_str());
    return 3;
  }
  int rc = 0;
  for (const char* f : files) rc = std::max(rc, dump(f, llvm));
  return rc;
}
