#include <gtest/gtest.h>

#include "provenance/disasm.hpp"
#include "test_support.hpp"

using namespace provenance;
namespace ts = testing_support;

namespace {

std::vector<std::string> regs_of(const Operand& op) {
  std::vector<std::string> out;
  for (const auto& r : op.registers) out.push_back(r.token);
  return out;
}

Instruction one(const std::string& line, Isa isa = Isa::Arm32) {
  auto ins = parse_listing_line(line, isa);
  EXPECT_TRUE(ins.has_value()) << line;
  return ins.value_or(Instruction{});
}

Instruction roles(const std::string& mnemonic, const std::string& operands, Isa isa = Isa::Arm32) {
  return one("1000:\t00000001\t" + mnemonic + "\t" + operands, isa);
}

DisassemblerConfig objdump() {
  DisassemblerConfig c;
  c.executable = ts::objdump_path();
  return c;
}

}  // namespace

TEST(CanonicalizeRegister, Arm32Aliases) {
  EXPECT_EQ(canonicalize_register("r13", Isa::Arm32)->token, "sp");
  EXPECT_EQ(canonicalize_register("r11", Isa::Arm32)->token, "fp");
  EXPECT_EQ(canonicalize_register("r12", Isa::Arm32)->token, "ip");
  EXPECT_EQ(canonicalize_register("r14", Isa::Arm32)->token, "lr");
  EXPECT_EQ(canonicalize_register("r15", Isa::Arm32)->token, "pc");
  EXPECT_EQ(canonicalize_register("sl", Isa::Arm32)->token, "r10");
  EXPECT_EQ(canonicalize_register("sb", Isa::Arm32)->token, "r9");
  EXPECT_EQ(canonicalize_register("R3", Isa::Arm32)->token, "r3");
  EXPECT_FALSE(canonicalize_register("d7", Isa::Arm32));
  EXPECT_FALSE(canonicalize_register("s0", Isa::Arm32));
  EXPECT_FALSE(canonicalize_register("q1", Isa::Arm32));
  EXPECT_FALSE(canonicalize_register("r16", Isa::Arm32));
  EXPECT_FALSE(canonicalize_register("x0", Isa::Arm32));
}

TEST(CanonicalizeRegister, AArch64Names) {
  EXPECT_EQ(canonicalize_register("x29", Isa::AArch64)->token, "x29");
  EXPECT_EQ(canonicalize_register("fp", Isa::AArch64)->token, "x29");
  EXPECT_EQ(canonicalize_register("lr", Isa::AArch64)->token, "x30");
  EXPECT_EQ(canonicalize_register("wsp", Isa::AArch64)->token, "sp");
  EXPECT_EQ(canonicalize_register("wzr", Isa::AArch64)->token, "wzr");
  EXPECT_EQ(canonicalize_register("xzr", Isa::AArch64)->token, "xzr");
  EXPECT_FALSE(canonicalize_register("v0", Isa::AArch64));
  EXPECT_FALSE(canonicalize_register("x31", Isa::AArch64));
  EXPECT_FALSE(canonicalize_register("r0", Isa::AArch64));
  for (int n = 0; n <= 30; ++n)
    EXPECT_NE(canonicalize_register("w" + std::to_string(n), Isa::AArch64)->token,
              canonicalize_register("x" + std::to_string(n), Isa::AArch64)->token);
}

TEST(CanonicalizeRegister, IdempotentOverEveryName) {
  std::vector<std::string> tokens = {"fp", "ip", "sp", "lr", "pc", "sl", "sb", "wsp", "xzr", "wzr"};
  for (int i = 0; i <= 31; ++i) {
    tokens.push_back("r" + std::to_string(i));
    tokens.push_back("x" + std::to_string(i));
    tokens.push_back("w" + std::to_string(i));
  }
  for (Isa isa : {Isa::Arm32, Isa::AArch64}) {
    for (const auto& t : tokens) {
      const auto once = canonicalize_register(t, isa);
      if (!once) continue;
      const auto twice = canonicalize_register(once->token, isa);
      ASSERT_TRUE(twice) << t;
      EXPECT_EQ(*once, *twice) << t;
      const auto& set = register_set(isa);
      EXPECT_NE(std::find(set.begin(), set.end(), once->token), set.end()) << t;
    }
  }
}

TEST(ParseListing, MovImmediateLine) {
  const auto ins = one("1a2c:\te3a03000\tmov\tr3, #0");
  EXPECT_EQ(ins.address, 0x1a2cu);
  EXPECT_EQ(ins.mnemonic, "mov");
  ASSERT_EQ(ins.operands.size(), 2u);
  EXPECT_EQ(ins.operands[0].kind, OperandKind::Register);
  EXPECT_EQ(regs_of(ins.operands[0]), std::vector<std::string>{"r3"});
  EXPECT_EQ(ins.operands[0].role, Role::Destination);
  EXPECT_EQ(ins.operands[1].kind, OperandKind::Immediate);
  EXPECT_EQ(ins.operands[1].role, Role::Source);
}

TEST(ParseListing, SkipsNonInstructionLines) {
  for (const char* line : {"Disassembly of section .text:", "", "   ...", "00008000 <main>:",
                           "a.out:     file format elf32-littlearm", "abc:     file format elf32-littlearm",
                           "   8004:\t00000000 \t.word\t0x00000000", "   8008:\te7f000f0 \t.inst\t0xe7f000f0 ; undefined",
                           "   800c:\t00000000 \tudf\t#0", "   8010:\tffffffff \t<unknown>"}) {
    EXPECT_FALSE(parse_listing_line(line, Isa::Arm32)) << line;
  }
  EXPECT_TRUE(parse_listing_line("   800c:\tdeadbeef \tudf\t#48879", Isa::AArch64));
}

TEST(ParseListing, EncodingStyles) {
  // GNU Thumb halfwords, LLVM byte groups, GNU AArch64 with a comment.
  EXPECT_EQ(one("    8000:\tf8d3 3000 \tldr.w\tr3, [r3]").mnemonic, "ldr.w");
  EXPECT_EQ(one("    8000: 80 b5        \tpush\t{r7, lr}").mnemonic, "push");
  const auto a64 = one("  400110:\t910003fd \tmov\tx29, sp // comment", Isa::AArch64);
  EXPECT_EQ(a64.mnemonic, "mov");
  EXPECT_EQ(regs_of(a64.operands[1]), std::vector<std::string>{"sp"});
  const auto commented = one("   8014:\te59f3010 \tldr\tr3, [pc, #16]\t@ 802c <main+0x2c>");
  ASSERT_EQ(commented.operands.size(), 2u);
  EXPECT_EQ(regs_of(commented.operands[1]), std::vector<std::string>{"pc"});
  const auto spaced = one("8018: e1a00001 mov r0, r1");
  EXPECT_EQ(spaced.mnemonic, "mov");
  EXPECT_EQ(spaced.operands.size(), 2u);
}

TEST(ParseListing, ConditionSuffixesStayInMnemonic) {
  EXPECT_EQ(one("8000:\t012fff1e\tbxeq\tlr").mnemonic, "bxeq");
  EXPECT_EQ(one("8000:\t10000001\tandne\tr0, r0, r1").mnemonic, "andne");
  EXPECT_EQ(one("8000:\t05d03000\tldrbeq\tr3, [r0]").mnemonic, "ldrbeq");
}

TEST(ParseListing, EmptyListingThrows) {
  try {
    parse_listing("\nDisassembly of section .text:\n\n", Isa::Arm32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyListing);
  }
}

TEST(ParseListing, CountMatchesGrammarLines) {
  std::mt19937 rng(7);
  const std::vector<std::string> noise = {"", "Disassembly of section .text:", "00008000 <f>:", "\t...",
                                          "   8000:\t00000000 \t.word\t0x00000000"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    std::size_t expected = 0;
    for (int i = 0; i < 60; ++i) {
      if (rng() % 3 == 0) {
        text += "  " + std::to_string(1000 + i) + ":\te0811002\tadd\tr1, r1, r2\n";
        ++expected;
      } else {
        text += noise[rng() % noise.size()] + "\n";
      }
    }
    text += "  9999:\te1a00000\tnop\n";
    ++expected;
    const auto a = parse_listing(text, Isa::Arm32);
    EXPECT_EQ(a.size(), expected);
    const auto b = parse_listing(text, Isa::Arm32);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(format_instruction(a[i]), format_instruction(b[i]));
  }
}

TEST(ParseListing, RoundTripKeepsMnemonicsAndRegisters) {
  const std::string text =
      "   8000:\te92d4800 \tpush\t{fp, lr}\n"
      "   8004:\te28db004 \tadd\tfp, sp, #4\n"
      "   8008:\te51b3008 \tldr\tr3, [fp, #-8]\n"
      "   800c:\te1a03103 \tlsl\tr3, r3, #2\n"
      "   8010:\te7923003 \tldr\tr3, [r2, r3]\n"
      "   8014:\te8bd8800 \tpop\t{fp, pc}\n";
  const auto first = parse_listing(text, Isa::Arm32);
  std::string again;
  for (const auto& ins : first) again += "0:\t00000000\t" + format_instruction(ins) + "\n";
  const auto second = parse_listing(again, Isa::Arm32);
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].mnemonic, second[i].mnemonic);
    ASSERT_EQ(first[i].operands.size(), second[i].operands.size());
    for (std::size_t k = 0; k < first[i].operands.size(); ++k) {
      EXPECT_EQ(regs_of(first[i].operands[k]), regs_of(second[i].operands[k]));
      EXPECT_EQ(first[i].operands[k].role, second[i].operands[k].role);
    }
  }
}

TEST(OperandRoles, StoreAllSource) {
  const auto ins = roles("str", "r3, [fp, #-8]");
  EXPECT_EQ(ins.operands[0].role, Role::Source);
  EXPECT_EQ(ins.operands[1].kind, OperandKind::MemoryRef);
  EXPECT_EQ(regs_of(ins.operands[1]), std::vector<std::string>{"fp"});
  EXPECT_EQ(ins.operands[1].role, Role::Source);
}

TEST(OperandRoles, DefaultFirstDestination) {
  const auto ins = roles("add", "r3, r3, r1");
  EXPECT_EQ(ins.operands[0].role, Role::Destination);
  EXPECT_EQ(ins.operands[1].role, Role::Source);
  EXPECT_EQ(ins.operands[2].role, Role::Source);
  const auto bic = roles("bic", "r0, r0, #1");
  EXPECT_EQ(bic.operands[0].role, Role::Destination);
}

TEST(OperandRoles, WritebackBaseIsBoth) {
  const auto ins = roles("ldr", "w8, [sp, #12]!", Isa::AArch64);
  EXPECT_EQ(ins.operands[0].role, Role::Destination);
  EXPECT_EQ(regs_of(ins.operands[1]), std::vector<std::string>{"sp"});
  EXPECT_EQ(ins.operands[1].role, Role::Both);
  const auto stp = roles("stp", "x29, x30, [sp, #-16]!", Isa::AArch64);
  EXPECT_EQ(stp.operands[0].role, Role::Source);
  EXPECT_EQ(stp.operands[1].role, Role::Source);
  EXPECT_EQ(stp.operands[2].role, Role::Both);
  const auto str = roles("str", "r3, [sp, #-4]!");
  EXPECT_EQ(str.operands[1].role, Role::Both);
}

TEST(OperandRoles, PostIndexWritesBase) {
  const auto ldp = roles("ldp", "x29, x30, [sp], #16", Isa::AArch64);
  EXPECT_EQ(ldp.operands[0].role, Role::Destination);
  EXPECT_EQ(ldp.operands[1].role, Role::Destination);
  EXPECT_EQ(ldp.operands[2].role, Role::Both);
  EXPECT_EQ(ldp.operands[3].role, Role::Source);
  const auto reg = roles("ldr", "r2, [r0], r1");
  EXPECT_EQ(reg.operands[0].role, Role::Destination);
  EXPECT_EQ(reg.operands[1].role, Role::Both);
  EXPECT_EQ(reg.operands[2].role, Role::Source);
}

TEST(OperandRoles, RegisterLists) {
  const auto push = roles("push", "{r4-r7, lr}");
  EXPECT_EQ(push.operands[0].kind, OperandKind::RegisterList);
  EXPECT_EQ(regs_of(push.operands[0]), (std::vector<std::string>{"r4", "r5", "r6", "r7", "lr"}));
  EXPECT_EQ(push.operands[0].role, Role::Source);
  const auto pop = roles("pop", "{r4, pc}");
  EXPECT_EQ(pop.operands[0].role, Role::Destination);
  const auto ldm = roles("ldmia", "r0!, {r4, r5}");
  EXPECT_EQ(ldm.operands[0].role, Role::Both);
  EXPECT_EQ(ldm.operands[1].role, Role::Destination);
  const auto stm = roles("stmdb", "sp!, {r4, lr}");
  EXPECT_EQ(stm.operands[0].role, Role::Both);
  EXPECT_EQ(stm.operands[1].role, Role::Source);
}

TEST(OperandRoles, CompareAndBranchReadOnly) {
  for (const auto& [m, ops] : std::vector<std::pair<std::string, std::string>>{
           {"cmp", "r0, r1"}, {"tst", "r0, #1"}, {"teq", "r2, r3"}, {"cmn", "r1, #4"}, {"bxeq", "lr"},
           {"blx", "r3"}, {"bls", "8000"}, {"cbz", "r0, 8040"}, {"bl", "8000 <f>"}}) {
    const auto ins = roles(m, ops);
    EXPECT_EQ(mnemonic_class(m, Isa::Arm32) == MnemonicClass::Compare ||
                  mnemonic_class(m, Isa::Arm32) == MnemonicClass::Branch,
              true)
        << m;
    for (const auto& op : ins.operands) EXPECT_EQ(op.role, Role::Source) << m;
  }
  for (const auto& [m, ops] : std::vector<std::pair<std::string, std::string>>{
           {"ret", ""}, {"br", "x16"}, {"b.ne", "400100"}, {"tbnz", "w0, #3, 400100"}, {"cbnz", "x1, 400200"}}) {
    EXPECT_EQ(mnemonic_class(m, Isa::AArch64), MnemonicClass::Branch) << m;
    const auto ins = roles(m, ops, Isa::AArch64);
    for (const auto& op : ins.operands) EXPECT_EQ(op.role, Role::Source) << m;
  }
  EXPECT_EQ(mnemonic_class("bic", Isa::Arm32), MnemonicClass::Default);
  EXPECT_EQ(mnemonic_class("bfi", Isa::Arm32), MnemonicClass::Default);
}

TEST(OperandRoles, ShiftRegisterIsRead) {
  const auto ins = roles("mov", "r0, r1, lsl r2");
  ASSERT_EQ(ins.operands.size(), 3u);
  EXPECT_EQ(regs_of(ins.operands[2]), std::vector<std::string>{"r2"});
  EXPECT_EQ(ins.operands[2].role, Role::Source);
}

TEST(OperandRoles, CoprocessorReadWritesCoreRegister) {
  const auto ins = roles("mrc", "p15, 0, r0, c13, c0, 3");
  EXPECT_EQ(ins.operands[2].role, Role::Destination);
}

TEST(OperandRoles, NonGpRegistersHaveNoNames) {
  const auto ins = roles("vadd.f64", "d0, d1, d2");
  for (const auto& op : ins.operands) EXPECT_TRUE(op.registers.empty());
  const auto mixed = roles("vmov", "r0, s0");
  EXPECT_EQ(regs_of(mixed.operands[0]), std::vector<std::string>{"r0"});
  EXPECT_EQ(mixed.operands[0].role, Role::Destination);
}

TEST(OperandRoles, PureFunctionOfInput) {
  const auto a = roles("ldr", "r2, [r0, r1, lsl #2]");
  const auto b = roles("ldr", "r2, [r0, r1, lsl #2]");
  EXPECT_EQ(regs_of(a.operands[1]), (std::vector<std::string>{"r0", "r1"}));
  EXPECT_EQ(a.operands[1].role, b.operands[1].role);
}

TEST(DisassembleBinary, ErrorCodes) {
  const auto dir = ts::temp_dir("disasm");
  const auto expect_code = [&](const std::filesystem::path& p, ErrorCode code, const DisassemblerConfig& cfg) {
    try {
      disassemble_binary(p, std::nullopt, cfg);
      ADD_FAILURE() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  ts::write_file(dir / "empty", "");
  expect_code(dir / "empty", ErrorCode::NotAnElf, objdump());
  ts::write_bytes(dir / "x86.elf", ts::make_elf(62, true, ts::words_le({0x90909090})));
  expect_code(dir / "x86.elf", ErrorCode::UnsupportedMachine, objdump());
  ts::write_bytes(dir / "noexec.elf", ts::make_elf(40, false, ts::words_le({0xe3a03000}), false));
  expect_code(dir / "noexec.elf", ErrorCode::NoExecutableSection, objdump());
  ts::write_bytes(dir / "ok.elf", ts::make_elf(40, false, ts::words_le({0xe3a03000})));
  DisassemblerConfig missing;
  missing.executable = "/nonexistent/objdump";
  expect_code(dir / "ok.elf", ErrorCode::DisassemblerUnavailable, missing);
  DisassemblerConfig failing;
  failing.executable = "false";
  expect_code(dir / "ok.elf", ErrorCode::DisassemblerUnavailable, failing);
  try {
    disassemble_binary(dir / "ok.elf", Isa::AArch64, objdump());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IsaMismatch);
  }
  std::filesystem::remove_all(dir);
}

TEST(DisassembleBinary, MatchesReferenceDisassembler) {
  const auto dir = ts::temp_dir("disasm_ref");
  const auto arm = dir / "arm.elf";
  ts::write_bytes(arm, ts::make_elf(40, false, ts::words_le({0xe3a03000, 0xe0833001, 0xe50b3008, 0xe12fff1e})));
  const auto listing = disassemble_binary(arm, std::nullopt, objdump());
  EXPECT_EQ(listing.isa, Isa::Arm32);
  ProcessResult direct;
  int spawn_error = 0;
  ASSERT_TRUE(run_process({ts::objdump_path(), "-d", arm.string()}, direct, spawn_error));
  EXPECT_EQ(listing.text, direct.out);
  const auto ins = parse_listing(listing.text, listing.isa);
  ASSERT_EQ(ins.size(), 4u);
  EXPECT_EQ(ins[0].mnemonic, "mov");
  EXPECT_EQ(format_instruction(ins[0]), "mov\tr3, #0");
  EXPECT_EQ(ins[1].mnemonic, "add");
  EXPECT_EQ(ins[2].mnemonic, "str");
  EXPECT_EQ(regs_of(ins[2].operands[1]), std::vector<std::string>{"fp"});
  EXPECT_EQ(format_instruction(ins[3]), "bx\tlr");

  const auto a64 = dir / "a64.elf";
  ts::write_bytes(a64, ts::make_elf(183, true, ts::words_le({0xd503201f, 0xaa0103e0, 0xd65f03c0})));
  const auto l64 = disassemble_binary(a64, std::nullopt, objdump());
  EXPECT_EQ(l64.isa, Isa::AArch64);
  EXPECT_NE(l64.text.find("file format elf64-littleaarch64"), std::string::npos);
  const auto i64 = parse_listing(l64.text, l64.isa);
  ASSERT_EQ(i64.size(), 3u);
  EXPECT_EQ(format_instruction(i64[1]), "mov\tx0, x1");
  EXPECT_EQ(i64[2].mnemonic, "ret");
  std::filesystem::remove_all(dir);
}

TEST(ObtainListing, ListingFilesBypassTheDisassembler) {
  const auto dir = ts::temp_dir("listing");
  ts::write_file(dir / "a.s", "x:     file format elf64-littleaarch64\n  10:\taa0103e0\tmov\tx0, x1\n");
  DisassemblerConfig never;
  never.executable = "/nonexistent";
  const auto l = obtain_listing(dir / "a.s", std::nullopt, never);
  EXPECT_EQ(l.isa, Isa::AArch64);
  ts::write_file(dir / "b.txt", "  10:\te1a00001\tmov\tr0, r1\n");
  EXPECT_THROW(obtain_listing(dir / "b.txt", std::nullopt, never), Error);
  EXPECT_EQ(obtain_listing(dir / "b.txt", Isa::Arm32, never).isa, Isa::Arm32);
  std::filesystem::remove_all(dir);
}

TEST(DisassemblerConfig, EnvironmentOverride) {
  ::setenv("PROVENANCE_OBJDUMP", "/opt/custom/objdump", 1);
  EXPECT_EQ(DisassemblerConfig::from_environment().executable, "/opt/custom/objdump");
  ::unsetenv("PROVENANCE_OBJDUMP");
  EXPECT_EQ(DisassemblerConfig::from_environment().executable, "objdump");
}
