#include <array>
#include <cctype>

#include "tadascope/x86.hpp"

namespace tadascope::x86 {
namespace {

enum class Arg : std::uint8_t {
  None,
  Eb, Ev, Ew, Ed,   // r/m operand
  Gb, Gv, Gw, Gd,   // reg field, general purpose
  M,                // r/m, memory only, unsized
  Rd,               // r/m, register only, 32-bit
  Sw,               // reg field, segment register
  Cd, Dd,           // reg field, control / debug register
  V, W,             // reg / r-m field, SIMD register (xmm or mm by prefix)
  Ib, Ibs, Iw, Iz,  // immediates (Ibs: sign-extended to operand size)
  Jb, Jz,           // relative branch targets
  Ob, Ov,           // absolute moffs
  Zb, Zv,           // register in low opcode bits
  AL, CL, DX, eAX, One,
  ES, CS, SS, DS, FS, GS,
  Ap,               // far pointer immediate
  Int3,             // implicit immediate 3 (0xCC)
};

struct Spec {
  const char* mnemonic = nullptr;  // nullptr: invalid; "#..." marks group/special handling
  Arg a = Arg::None, b = Arg::None, c = Arg::None;
  FlowKind flow = FlowKind::Sequential;
};

constexpr const char* kCondSuffix[16] = {"o", "no", "b", "ae", "z", "nz", "be", "a",
                                         "s", "ns", "p", "np", "l", "ge", "le", "g"};
const std::array<std::string, 16> kJcc = [] {
  std::array<std::string, 16> a;
  for (int i = 0; i < 16; ++i) a[i] = std::string("j") + kCondSuffix[i];
  return a;
}();
const std::array<std::string, 16> kSetcc = [] {
  std::array<std::string, 16> a;
  for (int i = 0; i < 16; ++i) a[i] = std::string("set") + kCondSuffix[i];
  return a;
}();
const std::array<std::string, 16> kCmovcc = [] {
  std::array<std::string, 16> a;
  for (int i = 0; i < 16; ++i) a[i] = std::string("cmov") + kCondSuffix[i];
  return a;
}();

std::array<Spec, 256> build_one_byte() {
  std::array<Spec, 256> t{};
  const char* alu[8] = {"add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"};
  for (int i = 0; i < 8; ++i) {
    int base = i * 8;
    t[base + 0] = {alu[i], Arg::Eb, Arg::Gb};
    t[base + 1] = {alu[i], Arg::Ev, Arg::Gv};
    t[base + 2] = {alu[i], Arg::Gb, Arg::Eb};
    t[base + 3] = {alu[i], Arg::Gv, Arg::Ev};
    t[base + 4] = {alu[i], Arg::AL, Arg::Ib};
    t[base + 5] = {alu[i], Arg::eAX, Arg::Iz};
  }
  t[0x06] = {"push", Arg::ES};
  t[0x07] = {"pop", Arg::ES};
  t[0x0E] = {"push", Arg::CS};
  t[0x16] = {"push", Arg::SS};
  t[0x17] = {"pop", Arg::SS};
  t[0x1E] = {"push", Arg::DS};
  t[0x1F] = {"pop", Arg::DS};
  t[0x27] = {"daa"};
  t[0x2F] = {"das"};
  t[0x37] = {"aaa"};
  t[0x3F] = {"aas"};
  for (int r = 0; r < 8; ++r) {
    t[0x40 + r] = {"inc", Arg::Zv};
    t[0x48 + r] = {"dec", Arg::Zv};
    t[0x50 + r] = {"push", Arg::Zv};
    t[0x58 + r] = {"pop", Arg::Zv};
    t[0x90 + r] = {"xchg", Arg::Zv, Arg::eAX};
    t[0xB0 + r] = {"mov", Arg::Zb, Arg::Ib};
    t[0xB8 + r] = {"mov", Arg::Zv, Arg::Iz};
  }
  t[0x90] = {"#nop"};
  t[0x60] = {"#pushad"};
  t[0x61] = {"#popad"};
  t[0x62] = {"bound", Arg::Gv, Arg::M};
  t[0x63] = {"arpl", Arg::Ew, Arg::Gw};
  t[0x68] = {"push", Arg::Iz};
  t[0x69] = {"imul", Arg::Gv, Arg::Ev, Arg::Iz};
  t[0x6A] = {"push", Arg::Ibs};
  t[0x6B] = {"imul", Arg::Gv, Arg::Ev, Arg::Ibs};
  t[0x6C] = {"insb"};
  t[0x6D] = {"#insd"};
  t[0x6E] = {"outsb"};
  t[0x6F] = {"#outsd"};
  for (int c = 0; c < 16; ++c) t[0x70 + c] = {"#jcc", Arg::Jb, Arg::None, Arg::None, FlowKind::ConditionalJump};
  t[0x80] = {"#grp1", Arg::Eb, Arg::Ib};
  t[0x81] = {"#grp1", Arg::Ev, Arg::Iz};
  t[0x82] = {"#grp1", Arg::Eb, Arg::Ib};
  t[0x83] = {"#grp1", Arg::Ev, Arg::Ibs};
  t[0x84] = {"test", Arg::Eb, Arg::Gb};
  t[0x85] = {"test", Arg::Ev, Arg::Gv};
  t[0x86] = {"xchg", Arg::Eb, Arg::Gb};
  t[0x87] = {"xchg", Arg::Ev, Arg::Gv};
  t[0x88] = {"mov", Arg::Eb, Arg::Gb};
  t[0x89] = {"mov", Arg::Ev, Arg::Gv};
  t[0x8A] = {"mov", Arg::Gb, Arg::Eb};
  t[0x8B] = {"mov", Arg::Gv, Arg::Ev};
  t[0x8C] = {"mov", Arg::Ew, Arg::Sw};
  t[0x8D] = {"lea", Arg::Gv, Arg::M};
  t[0x8E] = {"mov", Arg::Sw, Arg::Ew};
  t[0x8F] = {"#grp1a", Arg::Ev};
  t[0x98] = {"#cwde"};
  t[0x99] = {"#cdq"};
  t[0x9A] = {"call", Arg::Ap, Arg::None, Arg::None, FlowKind::Call};
  t[0x9B] = {"wait"};
  t[0x9C] = {"#pushfd"};
  t[0x9D] = {"#popfd"};
  t[0x9E] = {"sahf"};
  t[0x9F] = {"lahf"};
  t[0xA0] = {"mov", Arg::AL, Arg::Ob};
  t[0xA1] = {"mov", Arg::eAX, Arg::Ov};
  t[0xA2] = {"mov", Arg::Ob, Arg::AL};
  t[0xA3] = {"mov", Arg::Ov, Arg::eAX};
  t[0xA4] = {"movsb"};
  t[0xA5] = {"#movsd"};
  t[0xA6] = {"cmpsb"};
  t[0xA7] = {"#cmpsd"};
  t[0xA8] = {"test", Arg::AL, Arg::Ib};
  t[0xA9] = {"test", Arg::eAX, Arg::Iz};
  t[0xAA] = {"stosb"};
  t[0xAB] = {"#stosd"};
  t[0xAC] = {"lodsb"};
  t[0xAD] = {"#lodsd"};
  t[0xAE] = {"scasb"};
  t[0xAF] = {"#scasd"};
  t[0xC0] = {"#grp2", Arg::Eb, Arg::Ib};
  t[0xC1] = {"#grp2", Arg::Ev, Arg::Ib};
  t[0xC2] = {"ret", Arg::Iw, Arg::None, Arg::None, FlowKind::Return};
  t[0xC3] = {"ret", Arg::None, Arg::None, Arg::None, FlowKind::Return};
  t[0xC4] = {"les", Arg::Gv, Arg::M};
  t[0xC5] = {"lds", Arg::Gv, Arg::M};
  t[0xC6] = {"#grp11", Arg::Eb, Arg::Ib};
  t[0xC7] = {"#grp11", Arg::Ev, Arg::Iz};
  t[0xC8] = {"enter", Arg::Iw, Arg::Ib};
  t[0xC9] = {"leave"};
  t[0xCA] = {"retf", Arg::Iw, Arg::None, Arg::None, FlowKind::Return};
  t[0xCB] = {"retf", Arg::None, Arg::None, Arg::None, FlowKind::Return};
  t[0xCC] = {"int", Arg::Int3};
  t[0xCD] = {"int", Arg::Ib};
  t[0xCE] = {"into"};
  t[0xCF] = {"iretd", Arg::None, Arg::None, Arg::None, FlowKind::Return};
  t[0xD0] = {"#grp2", Arg::Eb, Arg::One};
  t[0xD1] = {"#grp2", Arg::Ev, Arg::One};
  t[0xD2] = {"#grp2", Arg::Eb, Arg::CL};
  t[0xD3] = {"#grp2", Arg::Ev, Arg::CL};
  t[0xD4] = {"aam", Arg::Ib};
  t[0xD5] = {"aad", Arg::Ib};
  t[0xD6] = {"salc"};
  t[0xD7] = {"xlatb"};
  for (int i = 0xD8; i <= 0xDF; ++i) t[i] = {"#x87"};
  t[0xE0] = {"loopne", Arg::Jb, Arg::None, Arg::None, FlowKind::ConditionalJump};
  t[0xE1] = {"loope", Arg::Jb, Arg::None, Arg::None, FlowKind::ConditionalJump};
  t[0xE2] = {"loop", Arg::Jb, Arg::None, Arg::None, FlowKind::ConditionalJump};
  t[0xE3] = {"jecxz", Arg::Jb, Arg::None, Arg::None, FlowKind::ConditionalJump};
  t[0xE4] = {"in", Arg::AL, Arg::Ib};
  t[0xE5] = {"in", Arg::eAX, Arg::Ib};
  t[0xE6] = {"out", Arg::Ib, Arg::AL};
  t[0xE7] = {"out", Arg::Ib, Arg::eAX};
  t[0xE8] = {"call", Arg::Jz, Arg::None, Arg::None, FlowKind::Call};
  t[0xE9] = {"jmp", Arg::Jz, Arg::None, Arg::None, FlowKind::Jump};
  t[0xEA] = {"jmp", Arg::Ap, Arg::None, Arg::None, FlowKind::Jump};
  t[0xEB] = {"jmp", Arg::Jb, Arg::None, Arg::None, FlowKind::Jump};
  t[0xEC] = {"in", Arg::AL, Arg::DX};
  t[0xED] = {"in", Arg::eAX, Arg::DX};
  t[0xEE] = {"out", Arg::DX, Arg::AL};
  t[0xEF] = {"out", Arg::DX, Arg::eAX};
  t[0xF1] = {"icebp"};
  t[0xF4] = {"hlt", Arg::None, Arg::None, Arg::None, FlowKind::Halt};
  t[0xF5] = {"cmc"};
  t[0xF6] = {"#grp3", Arg::Eb};
  t[0xF7] = {"#grp3", Arg::Ev};
  t[0xF8] = {"clc"};
  t[0xF9] = {"stc"};
  t[0xFA] = {"cli"};
  t[0xFB] = {"sti"};
  t[0xFC] = {"cld"};
  t[0xFD] = {"std"};
  t[0xFE] = {"#grp4", Arg::Eb};
  t[0xFF] = {"#grp5", Arg::Ev};
  return t;
}

std::array<Spec, 256> build_two_byte() {
  std::array<Spec, 256> t{};
  t[0x00] = {"#grp6", Arg::Ew};
  t[0x01] = {"#grp7"};
  t[0x02] = {"lar", Arg::Gv, Arg::Ew};
  t[0x03] = {"lsl", Arg::Gv, Arg::Ew};
  t[0x05] = {"syscall"};
  t[0x06] = {"clts"};
  t[0x07] = {"sysret"};
  t[0x08] = {"invd"};
  t[0x09] = {"wbinvd"};
  t[0x0B] = {"ud2", Arg::None, Arg::None, Arg::None, FlowKind::Halt};
  t[0x0D] = {"nop", Arg::Ev};
  t[0x0E] = {"femms"};
  const char* sse10[8] = {"movups", "movups", "movlps", "movlps", "unpcklps", "unpckhps", "movhps", "movhps"};
  for (int i = 0; i < 8; ++i) t[0x10 + i] = {sse10[i], Arg::V, Arg::W};
  t[0x11] = {"movups", Arg::W, Arg::V};
  t[0x13] = {"movlps", Arg::W, Arg::V};
  t[0x17] = {"movhps", Arg::W, Arg::V};
  t[0x18] = {"prefetch", Arg::M};
  for (int i = 0x19; i <= 0x1F; ++i) t[i] = {"nop", Arg::Ev};
  t[0x20] = {"mov", Arg::Rd, Arg::Cd};
  t[0x21] = {"mov", Arg::Rd, Arg::Dd};
  t[0x22] = {"mov", Arg::Cd, Arg::Rd};
  t[0x23] = {"mov", Arg::Dd, Arg::Rd};
  const char* sse28[8] = {"movaps", "movaps", "cvtpi2ps", "movntps", "cvttps2pi", "cvtps2pi", "ucomiss", "comiss"};
  for (int i = 0; i < 8; ++i) t[0x28 + i] = {sse28[i], Arg::V, Arg::W};
  t[0x29] = {"movaps", Arg::W, Arg::V};
  t[0x2B] = {"movntps", Arg::M, Arg::V};
  t[0x30] = {"wrmsr"};
  t[0x31] = {"rdtsc"};
  t[0x32] = {"rdmsr"};
  t[0x33] = {"rdpmc"};
  t[0x34] = {"sysenter"};
  t[0x35] = {"sysexit"};
  t[0x37] = {"getsec"};
  t[0x38] = {"#0f38"};
  t[0x3A] = {"#0f3a"};
  for (int c = 0; c < 16; ++c) {
    t[0x40 + c] = {"#cmovcc", Arg::Gv, Arg::Ev};
    t[0x80 + c] = {"#jcc", Arg::Jz, Arg::None, Arg::None, FlowKind::ConditionalJump};
    t[0x90 + c] = {"#setcc", Arg::Eb};
  }
  const char* sse50[16] = {"movmskps", "sqrtps", "rsqrtps", "rcpps", "andps",    "andnps",   "orps",  "xorps",
                           "addps",    "mulps",  "cvtps2pd", "cvtdq2ps", "subps", "minps", "divps", "maxps"};
  for (int i = 0; i < 16; ++i) t[0x50 + i] = {sse50[i], Arg::V, Arg::W};
  t[0x50] = {"movmskps", Arg::Gd, Arg::W};
  const char* mmx60[16] = {"punpcklbw", "punpcklwd", "punpckldq", "packsswb", "pcmpgtb", "pcmpgtw",
                           "pcmpgtd",   "packuswb",  "punpckhbw", "punpckhwd", "punpckhdq", "packssdw",
                           "punpcklqdq", "punpckhqdq", "movd",    "movq"};
  for (int i = 0; i < 16; ++i) t[0x60 + i] = {mmx60[i], Arg::V, Arg::W};
  t[0x6E] = {"movd", Arg::V, Arg::Ed};
  t[0x70] = {"pshufw", Arg::V, Arg::W, Arg::Ib};
  t[0x71] = {"#simdshift", Arg::W, Arg::Ib};
  t[0x72] = {"#simdshift", Arg::W, Arg::Ib};
  t[0x73] = {"#simdshift", Arg::W, Arg::Ib};
  t[0x74] = {"pcmpeqb", Arg::V, Arg::W};
  t[0x75] = {"pcmpeqw", Arg::V, Arg::W};
  t[0x76] = {"pcmpeqd", Arg::V, Arg::W};
  t[0x77] = {"emms"};
  t[0x78] = {"vmread", Arg::Ed, Arg::Gd};
  t[0x79] = {"vmwrite", Arg::Gd, Arg::Ed};
  t[0x7C] = {"haddps", Arg::V, Arg::W};
  t[0x7D] = {"hsubps", Arg::V, Arg::W};
  t[0x7E] = {"movd", Arg::Ed, Arg::V};
  t[0x7F] = {"movq", Arg::W, Arg::V};
  t[0xA0] = {"push", Arg::FS};
  t[0xA1] = {"pop", Arg::FS};
  t[0xA2] = {"cpuid"};
  t[0xA3] = {"bt", Arg::Ev, Arg::Gv};
  t[0xA4] = {"shld", Arg::Ev, Arg::Gv, Arg::Ib};
  t[0xA5] = {"shld", Arg::Ev, Arg::Gv, Arg::CL};
  t[0xA8] = {"push", Arg::GS};
  t[0xA9] = {"pop", Arg::GS};
  t[0xAA] = {"rsm"};
  t[0xAB] = {"bts", Arg::Ev, Arg::Gv};
  t[0xAC] = {"shrd", Arg::Ev, Arg::Gv, Arg::Ib};
  t[0xAD] = {"shrd", Arg::Ev, Arg::Gv, Arg::CL};
  t[0xAE] = {"#grp15"};
  t[0xAF] = {"imul", Arg::Gv, Arg::Ev};
  t[0xB0] = {"cmpxchg", Arg::Eb, Arg::Gb};
  t[0xB1] = {"cmpxchg", Arg::Ev, Arg::Gv};
  t[0xB2] = {"lss", Arg::Gv, Arg::M};
  t[0xB3] = {"btr", Arg::Ev, Arg::Gv};
  t[0xB4] = {"lfs", Arg::Gv, Arg::M};
  t[0xB5] = {"lgs", Arg::Gv, Arg::M};
  t[0xB6] = {"movzx", Arg::Gv, Arg::Eb};
  t[0xB7] = {"movzx", Arg::Gv, Arg::Ew};
  t[0xB8] = {"popcnt", Arg::Gv, Arg::Ev};
  t[0xB9] = {"ud1", Arg::Gv, Arg::Ev, Arg::None, FlowKind::Halt};
  t[0xBA] = {"#grp8", Arg::Ev, Arg::Ib};
  t[0xBB] = {"btc", Arg::Ev, Arg::Gv};
  t[0xBC] = {"bsf", Arg::Gv, Arg::Ev};
  t[0xBD] = {"bsr", Arg::Gv, Arg::Ev};
  t[0xBE] = {"movsx", Arg::Gv, Arg::Eb};
  t[0xBF] = {"movsx", Arg::Gv, Arg::Ew};
  t[0xC0] = {"xadd", Arg::Eb, Arg::Gb};
  t[0xC1] = {"xadd", Arg::Ev, Arg::Gv};
  t[0xC2] = {"cmpps", Arg::V, Arg::W, Arg::Ib};
  t[0xC3] = {"movnti", Arg::M, Arg::Gd};
  t[0xC4] = {"pinsrw", Arg::V, Arg::Ed, Arg::Ib};
  t[0xC5] = {"pextrw", Arg::Gd, Arg::W, Arg::Ib};
  t[0xC6] = {"shufps", Arg::V, Arg::W, Arg::Ib};
  t[0xC7] = {"#grp9"};
  for (int r = 0; r < 8; ++r) t[0xC8 + r] = {"bswap", Arg::Zv};
  const char* simdD0[48] = {
      "addsubps", "psrlw",  "psrld",   "psrlq",    "paddq",  "pmullw",  "movq",    "pmovmskb",
      "psubusb",  "psubusw", "pminub", "pand",     "paddusb", "paddusw", "pmaxub", "pandn",
      "pavgb",    "psraw",  "psrad",   "pavgw",    "pmulhuw", "pmulhw", "cvttpd2dq", "movntq",
      "psubsb",   "psubsw", "pminsw",  "por",      "paddsb", "paddsw",  "pmaxsw",  "pxor",
      "lddqu",    "psllw",  "pslld",   "psllq",    "pmuludq", "pmaddwd", "psadbw", "maskmovq",
      "psubb",    "psubw",  "psubd",   "psubq",    "paddb",  "paddw",   "paddd",   nullptr};
  for (int i = 0; i < 48; ++i) {
    if (simdD0[i] != nullptr) t[0xD0 + i] = {simdD0[i], Arg::V, Arg::W};
  }
  t[0xD6] = {"movq", Arg::W, Arg::V};
  t[0xD7] = {"pmovmskb", Arg::Gd, Arg::W};
  t[0xE7] = {"movntq", Arg::M, Arg::V};
  t[0xFF] = {"ud0", Arg::Gv, Arg::Ev, Arg::None, FlowKind::Halt};
  return t;
}

const std::array<Spec, 256>& one_byte_table() {
  static const auto table = build_one_byte();
  return table;
}
const std::array<Spec, 256>& two_byte_table() {
  static const auto table = build_two_byte();
  return table;
}

struct X87MemForm {
  const char* name;
  std::uint8_t size;
};

constexpr X87MemForm kX87Mem[8][8] = {
    {{"fadd", 4}, {"fmul", 4}, {"fcom", 4}, {"fcomp", 4}, {"fsub", 4}, {"fsubr", 4}, {"fdiv", 4}, {"fdivr", 4}},
    {{"fld", 4}, {nullptr, 0}, {"fst", 4}, {"fstp", 4}, {"fldenv", 0}, {"fldcw", 2}, {"fnstenv", 0}, {"fnstcw", 2}},
    {{"fiadd", 4}, {"fimul", 4}, {"ficom", 4}, {"ficomp", 4}, {"fisub", 4}, {"fisubr", 4}, {"fidiv", 4}, {"fidivr", 4}},
    {{"fild", 4}, {"fisttp", 4}, {"fist", 4}, {"fistp", 4}, {nullptr, 0}, {"fld", 10}, {nullptr, 0}, {"fstp", 10}},
    {{"fadd", 8}, {"fmul", 8}, {"fcom", 8}, {"fcomp", 8}, {"fsub", 8}, {"fsubr", 8}, {"fdiv", 8}, {"fdivr", 8}},
    {{"fld", 8}, {"fisttp", 8}, {"fst", 8}, {"fstp", 8}, {"frstor", 0}, {nullptr, 0}, {"fnsave", 0}, {"fnstsw", 2}},
    {{"fiadd", 2}, {"fimul", 2}, {"ficom", 2}, {"ficomp", 2}, {"fisub", 2}, {"fisubr", 2}, {"fidiv", 2}, {"fidivr", 2}},
    {{"fild", 2}, {"fisttp", 2}, {"fist", 2}, {"fistp", 2}, {"fbld", 10}, {"fild", 8}, {"fbstp", 10}, {"fistp", 8}},
};

constexpr const char* kX87Reg[8][8] = {
    {"fadd", "fmul", "fcom", "fcomp", "fsub", "fsubr", "fdiv", "fdivr"},
    {"fld", "fxch", "fnop", "fstp1", "#d9e0", "#d9e8", "#d9f0", "#d9f8"},
    {"fcmovb", "fcmove", "fcmovbe", "fcmovu", nullptr, "fucompp", nullptr, nullptr},
    {"fcmovnb", "fcmovne", "fcmovnbe", "fcmovnu", "#dbe0", "fucomi", "fcomi", nullptr},
    {"fadd", "fmul", "fcom2", "fcomp3", "fsubr", "fsub", "fdivr", "fdiv"},
    {"ffree", "fxch4", "fst", "fstp", "fucom", "fucomp", nullptr, nullptr},
    {"faddp", "fmulp", "fcomp5", "fcompp", "fsubrp", "fsubp", "fdivrp", "fdivp"},
    {"ffreep", "fxch7", "fstp8", "fstp9", "fnstsw", "fucomip", "fcomip", nullptr},
};

constexpr const char* kD9E0[8] = {"fchs", "fabs", nullptr, nullptr, "ftst", "fxam", nullptr, nullptr};
constexpr const char* kD9E8[8] = {"fld1", "fldl2t", "fldl2e", "fldpi", "fldlg2", "fldln2", "fldz", nullptr};
constexpr const char* kD9F0[8] = {"f2xm1", "fyl2x", "fptan", "fpatan", "fxtract", "fprem1", "fdecstp", "fincstp"};
constexpr const char* kD9F8[8] = {"fprem", "fyl2xp1", "fsqrt", "fsincos", "frndint", "fscale", "fsin", "fcos"};
constexpr const char* kDBE0[8] = {"fneni", "fndisi", "fnclex", "fninit", "fnsetpm", nullptr, nullptr, nullptr};

struct ModRM {
  std::uint8_t mod = 0, reg = 0, rm = 0;
};

class Decoding {
 public:
  Decoding(std::span<const std::uint8_t> bytes, Address address) : bytes_(bytes), address_(address) {
    if (bytes_.size() > 15) bytes_ = bytes_.subspan(0, 15);
  }

  std::optional<Instruction> run();

 private:
  bool fail() {
    ok_ = false;
    return false;
  }
  std::optional<std::uint8_t> u8() {
    if (pos_ >= bytes_.size()) {
      ok_ = false;
      return std::nullopt;
    }
    return bytes_[pos_++];
  }
  std::uint32_t read_le(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) {
      auto b = u8();
      if (!b) return 0;
      v |= std::uint32_t{*b} << (8 * i);
    }
    return v;
  }
  bool fetch_modrm() {
    if (modrm_) return true;
    auto b = u8();
    if (!b) return false;
    modrm_ = ModRM{static_cast<std::uint8_t>(*b >> 6), static_cast<std::uint8_t>((*b >> 3) & 7),
                   static_cast<std::uint8_t>(*b & 7)};
    return true;
  }
  int opsize() const { return opsize16_ ? 2 : 4; }

  Reg gpr(int width, int index) const {
    int base = width == 4 ? static_cast<int>(Reg::eax) : width == 2 ? static_cast<int>(Reg::ax) : static_cast<int>(Reg::al);
    return static_cast<Reg>(base + index);
  }
  Reg simd(int index) const {
    bool xmm = opsize16_ || rep_ || repne_ || xmm_context_;
    return static_cast<Reg>((xmm ? static_cast<int>(Reg::xmm0) : static_cast<int>(Reg::mm0)) + index);
  }

  Operand reg_operand(Reg r, int size) const {
    Operand op;
    op.kind = OperandKind::Register;
    op.reg = r;
    op.size = static_cast<std::uint8_t>(size);
    return op;
  }
  Operand imm_operand(std::uint32_t value, int size) const {
    Operand op;
    op.kind = OperandKind::Immediate;
    op.immediate_value = value;
    op.size = static_cast<std::uint8_t>(size);
    return op;
  }

  std::optional<Operand> rm_operand(int size, bool simd_reg = false);
  std::optional<Operand> memory_operand(int size);
  bool decode_arg(Arg arg, std::uint8_t opcode);
  bool decode_group(Instruction& ins, const Spec& spec, std::uint8_t opcode);
  bool decode_x87(std::uint8_t opcode);
  bool decode_two_byte();

  std::span<const std::uint8_t> bytes_;
  Address address_;
  std::size_t pos_ = 0;
  bool ok_ = true;
  bool opsize16_ = false;
  bool rep_ = false, repne_ = false, lock_ = false;
  bool xmm_context_ = false;
  std::optional<Segment> segment_;
  std::optional<ModRM> modrm_;
  std::optional<std::size_t> rel_at_;  // position of the relative branch immediate
  int rel_size_ = 0;
  std::size_t rel_operand_ = 0;
  Instruction ins_;
};

std::optional<Operand> Decoding::memory_operand(int size) {
  if (!fetch_modrm() || modrm_->mod == 3) return std::nullopt;
  Operand op;
  op.kind = OperandKind::Memory;
  op.size = static_cast<std::uint8_t>(size);
  op.segment_prefix = segment_;
  std::uint8_t mod = modrm_->mod;
  std::uint8_t rm = modrm_->rm;
  bool disp32_only = false;
  if (rm == 4) {
    auto sib = u8();
    if (!sib) return std::nullopt;
    std::uint8_t scale = *sib >> 6, index = (*sib >> 3) & 7, base = *sib & 7;
    if (index != 4) {
      op.index = gpr(4, index);
      op.scale = static_cast<std::uint8_t>(1u << scale);
    }
    if (base == 5 && mod == 0) {
      disp32_only = true;
    } else {
      op.base = gpr(4, base);
    }
  } else if (rm == 5 && mod == 0) {
    disp32_only = true;
  } else {
    op.base = gpr(4, rm);
  }
  if (disp32_only || mod == 2) {
    op.displacement = static_cast<std::int32_t>(read_le(4));
  } else if (mod == 1) {
    auto d = u8();
    if (!d) return std::nullopt;
    op.displacement = static_cast<std::int8_t>(*d);
  }
  if (!ok_) return std::nullopt;
  return op;
}

std::optional<Operand> Decoding::rm_operand(int size, bool simd_reg) {
  if (!fetch_modrm()) return std::nullopt;
  if (modrm_->mod == 3) {
    Reg r = simd_reg ? simd(modrm_->rm) : gpr(size, modrm_->rm);
    return reg_operand(r, size);
  }
  return memory_operand(size);
}

bool Decoding::decode_arg(Arg arg, std::uint8_t opcode) {
  auto push = [&](std::optional<Operand> op) {
    if (!op) return fail();
    ins_.operands.push_back(*op);
    return true;
  };
  switch (arg) {
    case Arg::None: return true;
    case Arg::Eb: return push(rm_operand(1));
    case Arg::Ev: return push(rm_operand(opsize()));
    case Arg::Ew: return push(rm_operand(2));
    case Arg::Ed: return push(rm_operand(4));
    case Arg::M: return push(memory_operand(0));
    case Arg::Rd:  // mod is ignored for control/debug register moves
      if (!fetch_modrm()) return fail();
      return push(reg_operand(gpr(4, modrm_->rm), 4));
    case Arg::W: return push(rm_operand(16, true));
    case Arg::Gb:
    case Arg::Gv:
    case Arg::Gw:
    case Arg::Gd: {
      if (!fetch_modrm()) return fail();
      int width = arg == Arg::Gb ? 1 : arg == Arg::Gw ? 2 : arg == Arg::Gd ? 4 : opsize();
      return push(reg_operand(gpr(width, modrm_->reg), width));
    }
    case Arg::Sw:
      if (!fetch_modrm() || modrm_->reg > 5) return fail();
      return push(reg_operand(static_cast<Reg>(static_cast<int>(Reg::es) + modrm_->reg), 2));
    case Arg::Cd:
      if (!fetch_modrm()) return fail();
      return push(reg_operand(static_cast<Reg>(static_cast<int>(Reg::cr0) + modrm_->reg), 4));
    case Arg::Dd:
      if (!fetch_modrm()) return fail();
      return push(reg_operand(static_cast<Reg>(static_cast<int>(Reg::dr0) + modrm_->reg), 4));
    case Arg::V:
      if (!fetch_modrm()) return fail();
      return push(reg_operand(simd(modrm_->reg), 16));
    case Arg::Ib: {
      std::uint32_t v = read_le(1);
      return ok_ ? push(imm_operand(v, 1)) : fail();
    }
    case Arg::Ibs: {
      std::uint32_t v = static_cast<std::uint32_t>(static_cast<std::int32_t>(static_cast<std::int8_t>(read_le(1))));
      if (opsize16_) v &= 0xFFFF;
      return ok_ ? push(imm_operand(v, opsize())) : fail();
    }
    case Arg::Iw: {
      std::uint32_t v = read_le(2);
      return ok_ ? push(imm_operand(v, 2)) : fail();
    }
    case Arg::Iz: {
      std::uint32_t v = read_le(opsize());
      return ok_ ? push(imm_operand(v, opsize())) : fail();
    }
    case Arg::Jb:
    case Arg::Jz: {
      rel_at_ = pos_;
      rel_size_ = arg == Arg::Jb ? 1 : opsize();
      read_le(rel_size_);
      rel_operand_ = ins_.operands.size();
      return ok_ ? push(imm_operand(0, 4)) : fail();  // target patched once the length is known
    }
    case Arg::Ob:
    case Arg::Ov: {
      Operand op;
      op.kind = OperandKind::Memory;
      op.size = static_cast<std::uint8_t>(arg == Arg::Ob ? 1 : opsize());
      op.segment_prefix = segment_;
      op.displacement = static_cast<std::int32_t>(read_le(4));
      return ok_ ? push(op) : fail();
    }
    case Arg::Zb: return push(reg_operand(gpr(1, opcode & 7), 1));
    case Arg::Zv: return push(reg_operand(gpr(opsize(), opcode & 7), opsize()));
    case Arg::AL: return push(reg_operand(Reg::al, 1));
    case Arg::CL: return push(reg_operand(Reg::cl, 1));
    case Arg::DX: return push(reg_operand(Reg::dx, 2));
    case Arg::eAX: return push(reg_operand(gpr(opsize(), 0), opsize()));
    case Arg::One: return push(imm_operand(1, 1));
    case Arg::ES: return push(reg_operand(Reg::es, 2));
    case Arg::CS: return push(reg_operand(Reg::cs, 2));
    case Arg::SS: return push(reg_operand(Reg::ss, 2));
    case Arg::DS: return push(reg_operand(Reg::ds, 2));
    case Arg::FS: return push(reg_operand(Reg::fs, 2));
    case Arg::GS: return push(reg_operand(Reg::gs, 2));
    case Arg::Ap: {
      std::uint32_t offset = read_le(opsize());
      read_le(2);  // selector
      return ok_ ? push(imm_operand(offset, opsize())) : fail();
    }
    case Arg::Int3: return push(imm_operand(3, 1));
  }
  return fail();
}

bool Decoding::decode_x87(std::uint8_t opcode) {
  if (!fetch_modrm()) return fail();
  int row = opcode - 0xD8;
  if (modrm_->mod != 3) {
    const X87MemForm& form = kX87Mem[row][modrm_->reg];
    if (form.name == nullptr) return fail();
    ins_.mnemonic = form.name;
    auto op = memory_operand(form.size);
    if (!op) return fail();
    ins_.operands.push_back(*op);
    return true;
  }
  const char* name = kX87Reg[row][modrm_->reg];
  if (name == nullptr) return fail();
  std::string_view n = name;
  if (n.front() == '#') {
    const char* const* sub = n == "#d9e0" ? kD9E0 : n == "#d9e8" ? kD9E8 : n == "#d9f0" ? kD9F0
                           : n == "#d9f8" ? kD9F8 : kDBE0;
    name = sub[modrm_->rm];
    if (name == nullptr) return fail();
    ins_.mnemonic = name;
    return true;
  }
  if (n == "fnop" && modrm_->rm != 0) return fail();
  if (n == "fucompp" && modrm_->rm != 1) return fail();
  if (n == "fcompp" && modrm_->rm != 1) return fail();
  if (n == "fnstsw") {
    if (modrm_->rm != 0) return fail();
    ins_.mnemonic = "fnstsw";
    ins_.operands.push_back(reg_operand(Reg::ax, 2));
    return true;
  }
  ins_.mnemonic = name;
  // Strip the alias digits used to keep undocumented forms distinct in the table.
  while (!ins_.mnemonic.empty() && std::isdigit(static_cast<unsigned char>(ins_.mnemonic.back()))) {
    ins_.mnemonic.pop_back();
  }
  ins_.operands.push_back(reg_operand(static_cast<Reg>(static_cast<int>(Reg::st0) + modrm_->rm), 10));
  return true;
}

bool Decoding::decode_group(Instruction& ins, const Spec& spec, std::uint8_t opcode) {
  std::string_view g = spec.mnemonic;
  if (!fetch_modrm()) return fail();
  std::uint8_t r = modrm_->reg;
  if (g == "#grp1") {
    static constexpr const char* names[8] = {"add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"};
    ins.mnemonic = names[r];
  } else if (g == "#grp1a") {
    if (r != 0) return fail();
    ins.mnemonic = "pop";
  } else if (g == "#grp2") {
    static constexpr const char* names[8] = {"rol", "ror", "rcl", "rcr", "shl", "shr", "shl", "sar"};
    ins.mnemonic = names[r];
  } else if (g == "#grp3") {
    static constexpr const char* names[8] = {"test", "test", "not", "neg", "mul", "imul", "div", "idiv"};
    ins.mnemonic = names[r];
    if (!decode_arg(spec.a, opcode)) return false;
    if (r < 2) return decode_arg(opcode == 0xF6 ? Arg::Ib : Arg::Iz, opcode);
    return true;
  } else if (g == "#grp4") {
    if (r > 1) return fail();
    ins.mnemonic = r == 0 ? "inc" : "dec";
  } else if (g == "#grp5") {
    switch (r) {
      case 0: ins.mnemonic = "inc"; break;
      case 1: ins.mnemonic = "dec"; break;
      case 2: ins.mnemonic = "call"; ins.flow = FlowKind::Call; break;
      case 3: ins.mnemonic = "call"; ins.flow = FlowKind::Call; return decode_arg(Arg::M, opcode);
      case 4: ins.mnemonic = "jmp"; ins.flow = FlowKind::Jump; break;
      case 5: ins.mnemonic = "jmp"; ins.flow = FlowKind::Jump; return decode_arg(Arg::M, opcode);
      case 6: ins.mnemonic = "push"; break;
      default: return fail();
    }
  } else if (g == "#grp11") {
    if (r != 0) return fail();
    ins.mnemonic = "mov";
  } else if (g == "#grp6") {
    static constexpr const char* names[8] = {"sldt", "str", "lldt", "ltr", "verr", "verw", nullptr, nullptr};
    if (names[r] == nullptr) return fail();
    ins.mnemonic = names[r];
    // sldt/str to a register store a full operand-size register.
    if (r <= 1 && modrm_->mod == 3) return decode_arg(Arg::Ev, opcode);
  } else if (g == "#grp8") {
    if (r < 4) return fail();
    static constexpr const char* names[4] = {"bt", "bts", "btr", "btc"};
    ins.mnemonic = names[r - 4];
  } else if (g == "#simdshift") {
    static constexpr const char* w[8] = {nullptr, nullptr, "psrlw", nullptr, "psraw", nullptr, "psllw", nullptr};
    static constexpr const char* d[8] = {nullptr, nullptr, "psrld", nullptr, "psrad", nullptr, "pslld", nullptr};
    static constexpr const char* q[8] = {nullptr, nullptr, "psrlq", "psrldq", nullptr, nullptr, "psllq", "pslldq"};
    const char* const* names = opcode == 0x71 ? w : opcode == 0x72 ? d : q;
    if (modrm_->mod != 3 || names[r] == nullptr) return fail();
    ins.mnemonic = names[r];
  } else {
    return fail();
  }
  return decode_arg(spec.a, opcode) && decode_arg(spec.b, opcode) && decode_arg(spec.c, opcode);
}

bool Decoding::decode_two_byte() {
  auto op = u8();
  if (!op) return false;
  const Spec& spec = two_byte_table()[*op];
  if (spec.mnemonic == nullptr) return fail();
  ins_.flow = spec.flow;
  xmm_context_ = (*op >= 0x10 && *op <= 0x17) || (*op >= 0x28 && *op <= 0x2F) || (*op >= 0x50 && *op <= 0x5F);
  std::string_view m = spec.mnemonic;
  if (m.front() != '#') {
    ins_.mnemonic = spec.mnemonic;
    return decode_arg(spec.a, *op) && decode_arg(spec.b, *op) && decode_arg(spec.c, *op);
  }
  if (m == "#jcc") {
    ins_.mnemonic = kJcc[*op & 0xF];
    return decode_arg(spec.a, *op);
  }
  if (m == "#setcc") {
    ins_.mnemonic = kSetcc[*op & 0xF];
    return decode_arg(spec.a, *op);
  }
  if (m == "#cmovcc") {
    ins_.mnemonic = kCmovcc[*op & 0xF];
    return decode_arg(spec.a, *op) && decode_arg(spec.b, *op);
  }
  if (m == "#grp7") {
    if (!fetch_modrm()) return fail();
    std::uint8_t r = modrm_->reg;
    if (modrm_->mod != 3) {
      static constexpr const char* names[8] = {"sgdt", "sidt", "lgdt", "lidt", "smsw", nullptr, "lmsw", "invlpg"};
      if (names[r] == nullptr) return fail();
      ins_.mnemonic = names[r];
      return decode_arg(r == 4 || r == 6 ? Arg::Ew : Arg::M, *op);
    }
    std::uint8_t full = static_cast<std::uint8_t>(0xC0 | (r << 3) | modrm_->rm);
    switch (full) {
      case 0xC1: ins_.mnemonic = "vmcall"; return true;
      case 0xC2: ins_.mnemonic = "vmlaunch"; return true;
      case 0xC3: ins_.mnemonic = "vmresume"; return true;
      case 0xC4: ins_.mnemonic = "vmxoff"; return true;
      case 0xC8: ins_.mnemonic = "monitor"; return true;
      case 0xC9: ins_.mnemonic = "mwait"; return true;
      case 0xCA: ins_.mnemonic = "clac"; return true;
      case 0xCB: ins_.mnemonic = "stac"; return true;
      case 0xD0: ins_.mnemonic = "xgetbv"; return true;
      case 0xD1: ins_.mnemonic = "xsetbv"; return true;
      case 0xD5: ins_.mnemonic = "xend"; return true;
      case 0xD6: ins_.mnemonic = "xtest"; return true;
      case 0xF9: ins_.mnemonic = "rdtscp"; return true;
      default: break;
    }
    if (r == 4) {
      ins_.mnemonic = "smsw";
      return decode_arg(Arg::Ev, *op);
    }
    if (r == 6) {
      ins_.mnemonic = "lmsw";
      return decode_arg(Arg::Ew, *op);
    }
    return fail();
  }
  if (m == "#grp15") {
    if (!fetch_modrm()) return fail();
    std::uint8_t r = modrm_->reg;
    if (modrm_->mod == 3) {
      static constexpr const char* names[8] = {nullptr, nullptr, nullptr, nullptr, nullptr, "lfence", "mfence", "sfence"};
      if (names[r] == nullptr) return fail();
      ins_.mnemonic = names[r];
      return true;
    }
    static constexpr const char* names[8] = {"fxsave", "fxrstor", "ldmxcsr", "stmxcsr", "xsave", "xrstor", "xsaveopt", "clflush"};
    ins_.mnemonic = names[r];
    return decode_arg(Arg::M, *op);
  }
  if (m == "#grp9") {
    if (!fetch_modrm()) return fail();
    std::uint8_t r = modrm_->reg;
    if (r == 1 && modrm_->mod != 3) {
      ins_.mnemonic = "cmpxchg8b";
      return decode_arg(Arg::M, *op);
    }
    if ((r == 6 || r == 7) && modrm_->mod == 3) {
      ins_.mnemonic = r == 6 ? "rdrand" : "rdseed";
      return decode_arg(Arg::Ev, *op);
    }
    return fail();
  }
  if (m == "#0f38" || m == "#0f3a") {
    auto third = u8();
    if (!third) return false;
    xmm_context_ = true;
    if (m == "#0f38" && (*third == 0xF0 || *third == 0xF1)) {
      ins_.mnemonic = repne_ ? "crc32" : "movbe";
      return decode_arg(*third == 0xF0 ? Arg::Gv : Arg::Ev, *op) &&
             decode_arg(*third == 0xF0 ? Arg::Ev : Arg::Gv, *op);
    }
    ins_.mnemonic = m == "#0f38" ? "sse38" : "sse3a";
    if (!decode_arg(Arg::V, *op) || !decode_arg(Arg::W, *op)) return false;
    return m == "#0f38" || decode_arg(Arg::Ib, *op);
  }
  if (m == "#simdshift") {
    return decode_group(ins_, spec, *op);
  }
  if (m == "#grp6" || m == "#grp8") {
    return decode_group(ins_, spec, *op);
  }
  return fail();
}

std::optional<Instruction> Decoding::run() {
  ins_.address = address_;
  std::uint8_t opcode = 0;
  for (;;) {
    auto b = u8();
    if (!b) return std::nullopt;
    switch (*b) {
      case 0x26: segment_ = Segment::es; continue;
      case 0x2E: segment_ = Segment::cs; continue;
      case 0x36: segment_ = Segment::ss; continue;
      case 0x3E: segment_ = Segment::ds; continue;
      case 0x64: segment_ = Segment::fs; continue;
      case 0x65: segment_ = Segment::gs; continue;
      case 0x66: opsize16_ = true; continue;
      case 0x67: return std::nullopt;  // 16-bit addressing is not supported
      case 0xF0: lock_ = true; continue;
      case 0xF2: repne_ = true; rep_ = false; continue;
      case 0xF3: rep_ = true; repne_ = false; continue;
      default: break;
    }
    opcode = *b;
    break;
  }

  if (opcode == 0x0F) {
    if (!decode_two_byte()) return std::nullopt;
  } else {
    const Spec& spec = one_byte_table()[opcode];
    if (spec.mnemonic == nullptr) return std::nullopt;
    ins_.flow = spec.flow;
    std::string_view m = spec.mnemonic;
    bool handled = true;
    if (m.front() != '#') {
      ins_.mnemonic = spec.mnemonic;
      handled = decode_arg(spec.a, opcode) && decode_arg(spec.b, opcode) && decode_arg(spec.c, opcode);
    } else if (m == "#jcc") {
      ins_.mnemonic = kJcc[opcode & 0xF];
      handled = decode_arg(spec.a, opcode);
    } else if (m == "#x87") {
      handled = decode_x87(opcode);
    } else if (m == "#nop") {
      ins_.mnemonic = rep_ ? "pause" : "nop";
      rep_ = false;
    } else if (m == "#pushad") {
      ins_.mnemonic = opsize16_ ? "pusha" : "pushad";
    } else if (m == "#popad") {
      ins_.mnemonic = opsize16_ ? "popa" : "popad";
    } else if (m == "#pushfd") {
      ins_.mnemonic = opsize16_ ? "pushf" : "pushfd";
    } else if (m == "#popfd") {
      ins_.mnemonic = opsize16_ ? "popf" : "popfd";
    } else if (m == "#cwde") {
      ins_.mnemonic = opsize16_ ? "cbw" : "cwde";
    } else if (m == "#cdq") {
      ins_.mnemonic = opsize16_ ? "cwd" : "cdq";
    } else if (m == "#insd" || m == "#outsd" || m == "#movsd" || m == "#cmpsd" || m == "#stosd" ||
               m == "#lodsd" || m == "#scasd") {
      std::string stem(m.substr(1, m.size() - 2));
      ins_.mnemonic = stem + (opsize16_ ? "w" : "d");
    } else {
      handled = decode_group(ins_, spec, opcode);
    }
    if (!handled) return std::nullopt;
  }
  if (!ok_) return std::nullopt;

  ins_.length = static_cast<std::uint8_t>(pos_);
  ins_.raw_bytes.assign(bytes_.begin(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
  ins_.rep = rep_;
  ins_.repne = repne_;
  ins_.lock = lock_;

  if (rel_at_) {
    std::int32_t rel = 0;
    if (rel_size_ == 1) {
      rel = static_cast<std::int8_t>(bytes_[*rel_at_]);
    } else {
      std::uint32_t raw = 0;
      for (int i = 0; i < rel_size_; ++i) raw |= std::uint32_t{bytes_[*rel_at_ + i]} << (8 * i);
      rel = rel_size_ == 2 ? static_cast<std::int16_t>(raw) : static_cast<std::int32_t>(raw);
    }
    Address target = ins_.next() + static_cast<std::uint32_t>(rel);
    if (rel_size_ == 2) target &= 0xFFFF;
    ins_.branch_target = target;
    ins_.operands[rel_operand_].immediate_value = target;
  }
  return ins_;
}

}  // namespace

std::optional<Instruction> X86Decoder::decode(std::span<const std::uint8_t> bytes, Address address) const {
  Decoding d(bytes, address);
  return d.run();
}

const InstructionDecoder& default_decoder() {
  static const X86Decoder decoder;
  return decoder;
}

std::optional<Instruction> decode_at(const BinaryImage& image, Address va, const InstructionDecoder& decoder) {
  auto bytes = image.bytes_from(va);
  if (bytes.empty()) return std::nullopt;
  return decoder.decode(bytes, va);
}

}  // namespace tadascope::x86
