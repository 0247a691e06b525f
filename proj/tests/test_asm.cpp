#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "bbrv/asmlang.hpp"

using namespace bbrv;
using namespace bbrv::assembler;
using isa::Op;

namespace {

std::vector<uint32_t> codeWords(const ProgramImage& img) {
  const Segment* s = img.codeSegment();
  REQUIRE(s != nullptr);
  REQUIRE(s->bytes.size() % 4 == 0);
  std::vector<uint32_t> out;
  for (size_t i = 0; i < s->bytes.size(); i += 4)
    out.push_back(uint32_t(s->bytes[i]) | uint32_t(s->bytes[i + 1]) << 8 |
                  uint32_t(s->bytes[i + 2]) << 16 | uint32_t(s->bytes[i + 3]) << 24);
  return out;
}

isa::Instruction dec(uint32_t w) {
  auto d = isa::decode(w);
  REQUIRE(isa::decodeOk(d));
  return std::get<isa::Instruction>(d);
}

}  // namespace

TEST_CASE("register names") {
  CHECK(parseRegister("x0") == 0);
  CHECK(parseRegister("zero") == 0);
  CHECK(parseRegister("ra") == 1);
  CHECK(parseRegister("sp") == 2);
  CHECK(parseRegister("a0") == 10);
  CHECK(parseRegister("a7") == 17);
  CHECK(parseRegister("t6") == 31);
  CHECK(parseRegister("fp") == 8);
  CHECK(parseRegister("s0") == 8);
  CHECK(parseRegister("x31") == 31);
  CHECK(parseRegister("x32") == -1);
  CHECK(parseRegister("foo") == -1);
  for (int i = 0; i < 32; ++i)
    CHECK(parseRegister(registerName(static_cast<uint8_t>(i))) == i);
}

TEST_CASE("seven line block-annotated kernel assembles to the expected words") {
  const char* src = R"(
    bb 2, 1, 0, 0
    add a0, a0, a1
    lcnt 3, lc1
    bb 2, 0, 1, 1
    add a1, a2, a2
    mul a2, a1, a2
    bb 7, 0, 0, 0
)";
  ProgramImage img = assemble(parse(src));
  auto words = codeWords(img);
  REQUIRE(words.size() == 7);
  CHECK(img.entry == kCodeBase);

  auto i0 = dec(words[0]);
  CHECK(i0.op == Op::Bb);
  CHECK(i0.bbSize == 2);
  CHECK(i0.bbSeq);
  auto i2 = dec(words[2]);
  CHECK(i2.op == Op::Lcnt);
  CHECK(i2.imm == 3);
  CHECK(i2.loopSet == 1);
  auto i3 = dec(words[3]);
  CHECK(i3.op == Op::Bb);
  CHECK(i3.bbSize == 2);
  CHECK_FALSE(i3.bbSeq);
  CHECK(i3.sFlags == 1);
  CHECK(i3.eFlags == 1);
  auto i5 = dec(words[5]);
  CHECK(i5.op == Op::Mul);
  auto i6 = dec(words[6]);
  CHECK(i6.op == Op::Bb);
  CHECK(i6.bbSize == 7);
}

TEST_CASE("branch offsets shift when code is inserted before the target") {
  auto offsetOf = [](const std::string& src) {
    auto words = codeWords(assemble(parse(src)));
    for (uint32_t w : words) {
      auto i = dec(w);
      if (i.op == Op::Bne) return i.imm;
    }
    FAIL("no branch found");
    return 0;
  };
  int32_t base = offsetOf("start: bne a0, a1, tgt\n nop\n tgt: ecall\n");
  int32_t shifted = offsetOf("start: bne a0, a1, tgt\n nop\n nop\n tgt: ecall\n");
  CHECK(base == 8);
  CHECK(shifted == base + 4);

  // backward branch
  int32_t back = offsetOf("loop: addi a0, a0, -1\n bne a0, zero, loop\n ecall\n");
  CHECK(back == -4);
}

TEST_CASE("pseudo-instruction expansion") {
  const char* src = R"(
    li a0, 7
    li a1, 0x80100000
    li a2, -3000
    mv a3, a0
    nop
    j skip
    ret
skip:
    ecall
)";
  auto words = codeWords(assemble(parse(src)));
  // li(7) -> 1, li(big) -> 2, li(-3000) -> 2, mv -> 1, nop -> 1, j -> 1, ret -> 1, ecall -> 1
  REQUIRE(words.size() == 10);
  auto i0 = dec(words[0]);
  CHECK(i0.op == Op::Addi);
  CHECK(i0.imm == 7);
  auto hi = dec(words[1]);
  auto lo = dec(words[2]);
  CHECK(hi.op == Op::Lui);
  CHECK(lo.op == Op::Addi);
  CHECK(static_cast<uint32_t>(hi.imm + lo.imm) == 0x80100000u);
  CHECK(static_cast<uint32_t>(dec(words[3]).imm + dec(words[4]).imm) == static_cast<uint32_t>(-3000));
  auto mv = dec(words[5]);
  CHECK(mv.op == Op::Addi);
  CHECK(mv.rd == 13);
  CHECK(mv.rs1 == 10);
  CHECK(mv.imm == 0);
  auto nop = dec(words[6]);
  CHECK(nop.op == Op::Addi);
  CHECK(nop.rd == 0);
  auto j = dec(words[7]);
  CHECK(j.op == Op::Jal);
  CHECK(j.rd == 0);
  CHECK(j.imm == 8);
  auto r = dec(words[8]);
  CHECK(r.op == Op::Jalr);
  CHECK(r.rd == 0);
  CHECK(r.rs1 == 1);
}

TEST_CASE("la materializes a data-section address") {
  const char* src = R"(
    la a0, buf
    lw a1, 0(a0)
    ecall
.org 0x80100000
buf:
    .word 42
    .word buf
)";
  ProgramImage img = assemble(parse(src));
  CHECK(img.symbols.at("buf") == kDataBase);
  auto words = codeWords(img);
  auto hi = dec(words[0]);
  auto lo = dec(words[1]);
  CHECK(static_cast<uint32_t>(hi.imm + lo.imm) == kDataBase);
  // data segment holds the literal and the label-valued word
  REQUIRE(img.segments.size() == 2);
  const Segment& data = img.segments[1];
  CHECK(data.addr == kDataBase);
  REQUIRE(data.bytes.size() == 8);
  CHECK(data.bytes[0] == 42);
  uint32_t w1 = uint32_t(data.bytes[4]) | uint32_t(data.bytes[5]) << 8 |
                uint32_t(data.bytes[6]) << 16 | uint32_t(data.bytes[7]) << 24;
  CHECK(w1 == kDataBase);
}

TEST_CASE("entry selection") {
  ProgramImage a = assemble(parse("nop\n ecall\n"));
  CHECK(a.entry == kCodeBase);
  ProgramImage b = assemble(parse("pad: nop\n_start: ecall\n"));
  CHECK(b.entry == kCodeBase + 4);
  ProgramImage c = assemble(parse(".globl main\npad: nop\nmain: ecall\n"));
  CHECK(c.entry == kCodeBase + 4);
}

TEST_CASE("assembly errors") {
  CHECK_THROWS_WITH_AS(assemble(parse("x: nop\nx: nop\n")),
                       doctest::Contains("duplicate label"), AsmError);
  CHECK_THROWS_WITH_AS(assemble(parse("j nowhere\n")),
                       doctest::Contains("undefined label"), AsmError);
  CHECK_THROWS_WITH_AS(assemble(parse("addi a0, a0, 5000\n")),
                       doctest::Contains("immediate out of range"), AsmError);
  // conditional branch reach is +/- 4 KiB
  CHECK_THROWS_WITH_AS(assemble(parse("beq a0, a1, far\n .space 8192\nfar: ecall\n")),
                       doctest::Contains("immediate out of range"), AsmError);
  // branch target not word aligned
  CHECK_THROWS_WITH_AS(assemble(parse("j odd\n .space 2\nodd: .word 0\n")),
                       doctest::Contains("misaligned target"), AsmError);
  CHECK_THROWS(parse("bb 0, 0\n"));
  CHECK_THROWS(parse("bb 65536, 0\n"));
  CHECK_THROWS(parse("lcnt 1, lc4\n"));
  CHECK_THROWS(parse("frobnicate a0\n"));
  CHECK_THROWS(parse("add a0, a1\n"));
}

TEST_CASE("disassemble then reassemble is byte identical") {
  const char* src = R"(
_start:
    la a0, buf
    li a1, 5
    li t0, 0
loop:
    lw t1, 0(a0)
    add t0, t0, t1
    addi a0, a0, 4
    addi a1, a1, -1
    bne a1, zero, loop
    bb 3, 1
    lcnt 2, lc0
    sw t0, 0(a0)
    mul t2, t0, t0
    srai t2, t2, 3
    jal ra, helper
    ecall
helper:
    ret
.org 0x80100000
buf:
    .word 1
    .word 2
    .word 3
    .word 4
    .word 5
    .space 64
)";
  ProgramImage img = assemble(parse(src));
  SourceUnit dis = disassemble(img);
  std::string text = render(dis);
  ProgramImage img2 = assemble(parse(text));
  REQUIRE(img.segments.size() == img2.segments.size());
  for (size_t i = 0; i < img.segments.size(); ++i) {
    CHECK(img.segments[i].addr == img2.segments[i].addr);
    CHECK(img.segments[i].bytes == img2.segments[i].bytes);
  }
}

TEST_CASE("image save/load round trip") {
  namespace fs = std::filesystem;
  const char* src = "_start: li a0, 9\n ecall\n .org 0x80100000\n d: .word 0xDEADBEEF\n";
  ProgramImage img = assemble(parse(src));
  fs::path p = fs::temp_directory_path() / "bbrv_test_image.img";
  saveImage(img, p.string());
  ProgramImage back = loadImage(p.string());
  CHECK(back.base == img.base);
  CHECK(back.entry == img.entry);
  REQUIRE(back.segments.size() == img.segments.size());
  for (size_t i = 0; i < img.segments.size(); ++i) {
    CHECK(back.segments[i].addr == img.segments[i].addr);
    CHECK(back.segments[i].bytes == img.segments[i].bytes);
  }
  CHECK(back.symbols == img.symbols);
  fs::remove(p);
  fs::remove(p.string() + ".json");
}
