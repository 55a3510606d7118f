#include "monvm/machine.hpp"

#include <random>
#include <set>
#include <sstream>

#include "doctest.h"

using namespace monvm;

namespace {

Program must_assemble(const std::string& src) {
  auto r = assemble(src);
  if (!r.ok()) {
    FAIL("assembly failed at line ", r.error().line, ": ", r.error().message);
  }
  return r.value();
}

EnforcementConfig wbr_mode() {
  EnforcementConfig cfg;
  cfg.mode = EnforcementConfig::Mode::Wbr;
  return cfg;
}

RunResult run_src(const std::string& src, EnforcementConfig cfg = wbr_mode(),
                  uint64_t fuel = 100000) {
  Program p = must_assemble(src);
  RunOptions opts;
  opts.enforce = cfg;
  opts.fuel = fuel;
  return run(p, opts);
}

// A bounded write-before-read window at 0x8000 in c5.
const char* kWbrPrologue =
    "_start:\n"
    "  cmove c5, c3\n"
    "  li c6, 0x8000\n"
    "  csetaddr c5, c5, c6\n"
    "  csetbounds c5, c5, 64\n"
    "  csetwbrbound c5, c5, c0\n";

}  // namespace

TEST_CASE("assembler: basic programs and diagnostics") {
  Program p = must_assemble("li c4, 42\nhalt\n");
  CHECK(p.size() == 2);
  CHECK(p.code[0].op == Opcode::Li);
  CHECK(p.code[0].imm == 42);

  Program q = must_assemble("csetwbrbound c5, c5, c0\n");
  CHECK(q.size() == 1);
  CHECK(q.code[0].op == Opcode::CSetOpBounds);
  CHECK(q.code[0].cp_kind == CpKind::WriteBeforeRead);

  auto bad = assemble("bxyz c1, c2, L\n");
  REQUIRE_FALSE(bad.ok());
  CHECK(bad.error().line == 1);

  auto undef = assemble("beq c1, c2, nowhere\n");
  REQUIRE_FALSE(undef.ok());

  auto dup = assemble("x:\nx:\n");
  REQUIRE_FALSE(dup.ok());

  // All seven operation-bound mnemonics resolve to their kinds.
  const std::pair<const char*, CpKind> kinds[] = {
      {"csetwbrbound", CpKind::WriteBeforeRead},
      {"csetwbxbound", CpKind::WriteBeforeExecute},
      {"csetrobound", CpKind::WriteBeforeReadOnly},
      {"csetxobound", CpKind::WriteBeforeExecuteOnly},
      {"csetwtbound", CpKind::WriteOnce},
      {"csetrtbound", CpKind::ReadOnce},
      {"csetxtbound", CpKind::ExecuteOnce},
  };
  for (const auto& [mnemonic, kind] : kinds) {
    Program one = must_assemble(std::string(mnemonic) + " c5, c5, c0\n");
    CHECK(one.code[0].cp_kind == kind);
  }
}

TEST_CASE("reset: boot contract") {
  auto m = reset(1ull << 20);
  REQUIRE(m.has_value());
  const Capability& root = m->regs[MachineState::kRootReg];
  CHECK(root.tag);
  CHECK(root.base == 0);
  CHECK(root.top == (1ull << 20));
  CHECK(root.perms == Permissions::all());
  CHECK(root.cp == CpKind::Disabled);

  CHECK_FALSE(reset(100).has_value());
  CHECK_FALSE(reset(4096 + 8).has_value());
  CHECK(reset(4096).has_value());
}

TEST_CASE("halt-only program and fuel accounting") {
  RunResult r = run_src("halt\n");
  CHECK(r.clean_exit());
  CHECK(r.exit_code == 0);
  CHECK(r.counters.total() == 1);

  RunResult loop = run_src("spin: jal c0, spin\n", wbr_mode(), 1000);
  CHECK(loop.trapped(TrapKind::OutOfFuel));
  CHECK(loop.counters.total() == 1000);
}

TEST_CASE("write-before-read life cycle on the machine") {
  SUBCASE("store makes the word readable") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c6, 7\n"
                          "  sw c6, 0(c5)\n"
                          "  lw c7, 0(c5)\n"
                          "  mv c4, c7\n"
                          "  halt\n");
    CHECK(r.clean_exit());
    CHECK(r.exit_code == 7);
  }

  SUBCASE("load before any store traps") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  lw c7, 0(c5)\n"
                          "  halt\n");
    CHECK(r.trapped(TrapKind::OpBoundsViolation));
    REQUIRE(r.trap.has_value());
    CHECK(r.trap->addr == 0x8000);
    CHECK(r.trap->size == 4);
  }

  SUBCASE("auto-init emulation zeroes the destination and continues") {
    EnforcementConfig cfg = wbr_mode();
    cfg.auto_init = true;
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c7, 123\n"
                          "  lw c7, 0(c5)\n"
                          "  mv c4, c7\n"
                          "  halt\n",
                          cfg);
    CHECK(r.clean_exit());
    CHECK(r.exit_code == 0);
    CHECK(r.auto_init_fill_count == 1);
  }

  SUBCASE("strict store mode traps gap stores") {
    EnforcementConfig cfg = wbr_mode();
    cfg.strict_store = true;
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c6, 7\n"
                          "  sw c6, 8(c5)\n"
                          "  halt\n",
                          cfg);
    CHECK(r.trapped(TrapKind::OpBoundsViolation));
    RunResult lax = run_src(std::string(kWbrPrologue) +
                            "  li c6, 7\n"
                            "  sw c6, 8(c5)\n"
                            "  halt\n");
    CHECK(lax.clean_exit());
  }
}

TEST_CASE("writeback visibility: the store's register shows the new frontier") {
  RunResult r = run_src(std::string(kWbrPrologue) +
                        "  li c6, 1\n"
                        "  sw c6, 0(c5)\n"
                        "  cgetoptop c7, c5\n"
                        "  cgetbase c8, c5\n"
                        "  sub c4, c7, c8\n"
                        "  halt\n");
  CHECK(r.clean_exit());
  CHECK(r.exit_code == 4);
}

TEST_CASE("capability copies diverge; only the store operand advances") {
  RunResult r = run_src(std::string(kWbrPrologue) +
                        "  cmove c9, c5\n"
                        "  li c6, 1\n"
                        "  sd c6, 0(c5)\n"
                        "  cgetoptop c7, c9\n"
                        "  cgetbase c8, c9\n"
                        "  sub c4, c7, c8\n"
                        "  halt\n");
  CHECK(r.clean_exit());
  CHECK(r.exit_code == 0);  // the copy in c9 still has the stale frontier
}

TEST_CASE("tag hygiene: byte stores invalidate in-memory capabilities") {
  // Store the root capability at 0x8000, clobber one byte, reload: the
  // loaded value must be untagged and unusable.
  RunResult r = run_src(
      "_start:\n"
      "  cmove c5, c3\n"
      "  li c6, 0x8000\n"
      "  csetaddr c5, c5, c6\n"
      "  csc c3, 0(c5)\n"
      "  li c7, 1\n"
      "  sb c7, 3(c5)\n"
      "  clc c8, 0(c5)\n"
      "  lw c9, 0(c8)\n"
      "  halt\n");
  CHECK(r.trapped(TrapKind::TagViolation));

  // Without the clobber the round trip preserves the tag and the fields.
  RunResult ok = run_src(
      "_start:\n"
      "  cmove c5, c3\n"
      "  li c6, 0x8000\n"
      "  csetaddr c5, c5, c6\n"
      "  csc c3, 0(c5)\n"
      "  clc c8, 0(c5)\n"
      "  cgetlen c4, c8\n"
      "  halt\n");
  CHECK(ok.clean_exit());
  CHECK(ok.exit_code == (1 << 20));
}

TEST_CASE("capability loads and stores require 16-byte alignment") {
  RunResult r = run_src(
      "_start:\n"
      "  cmove c5, c3\n"
      "  li c6, 0x8008\n"
      "  csetaddr c5, c5, c6\n"
      "  csc c3, 0(c5)\n"
      "  halt\n");
  CHECK(r.trapped(TrapKind::MisalignedCapAccess));
}

TEST_CASE("misaligned data accesses inside bounds are fine") {
  RunResult r = run_src(std::string(kWbrPrologue) +
                        "  li c6, 0x1122334455\n"
                        "  sd c6, 0(c5)\n"
                        "  lw c7, 1(c5)\n"
                        "  mv c4, c7\n"
                        "  halt\n");
  CHECK(r.clean_exit());
  CHECK(r.exit_code == 0x11223344);
}

TEST_CASE("conventional violations trap with their own kinds") {
  SUBCASE("out of bounds") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c6, 7\n"
                          "  sw c6, 64(c5)\n"
                          "  halt\n");
    CHECK(r.trapped(TrapKind::BoundsViolation));
  }
  SUBCASE("permission") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c7, 5\n"
                          "  candperm c5, c5, 29\n"  // strip write, keep the rest
                          "  sw c7, 0(c5)\n"
                          "  halt\n");
    CHECK(r.trapped(TrapKind::PermitStoreViolation));
  }
  SUBCASE("untagged dereference") {
    RunResult r = run_src(
        "_start:\n"
        "  li c5, 0x8000\n"
        "  lw c6, 0(c5)\n"
        "  halt\n");
    CHECK(r.trapped(TrapKind::TagViolation));
  }
  SUBCASE("op bounds increase traps") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  li c6, 32\n"
                          "  csetwbrbound c5, c5, c6\n"
                          "  halt\n");
    CHECK(r.trapped(TrapKind::OpBoundsViolation));
  }
  SUBCASE("monotonicity violation on csetbounds traps") {
    RunResult r = run_src(std::string(kWbrPrologue) +
                          "  csetbounds c5, c5, 128\n"
                          "  halt\n");
    CHECK(r.trapped(TrapKind::BoundsViolation));
  }
}

TEST_CASE("enforcement off is pass-through for op-bounds trapping programs") {
  const std::string program = std::string(kWbrPrologue) +
                              "  lw c7, 0(c5)\n"
                              "  mv c4, c7\n"
                              "  ecall 3\n"
                              "  halt\n";
  RunResult wbr = run_src(program);
  CHECK(wbr.trapped(TrapKind::OpBoundsViolation));

  EnforcementConfig off;
  off.mode = EnforcementConfig::Mode::NoCap;
  RunResult nocap = run_src(program, off);
  CHECK(nocap.clean_exit());
  CHECK(nocap.prints == std::vector<int64_t>{0});
}

TEST_CASE("determinism: identical runs produce identical results") {
  const std::string program = std::string(kWbrPrologue) +
                              "  li c6, 5\n"
                              "  li c7, 0\n"
                              "loop:\n"
                              "  sw c7, 0(c5)\n"
                              "  lw c8, 0(c5)\n"
                              "  add c7, c7, c8\n"
                              "  addi c6, c6, -1\n"
                              "  bne c6, c0, loop\n"
                              "  mv c4, c7\n"
                              "  ecall 3\n"
                              "  halt\n";
  RunResult a = run_src(program);
  RunResult b = run_src(program);
  CHECK(a.state == b.state);
  CHECK(a.exit_code == b.exit_code);
  CHECK(a.counters == b.counters);
  CHECK(a.prints == b.prints);
  CHECK(a.retired == b.retired);
}

TEST_CASE("program counter as an execute-once capability") {
  // Seeded directly: a conditional pcc trips on revisited instructions.
  Program p = must_assemble(
      "  li c4, 1\n"
      "  jal c0, back\n"
      "back:\n"
      "  jal c0, back\n");
  auto m = reset(1 << 16);
  REQUIRE(m.has_value());
  Capability pcc = m->pcc;
  pcc.base = 0;
  pcc.top = 4096;
  pcc.addr = 0;
  auto once = set_op_bounds(pcc, CpKind::ExecuteOnce, 0);
  REQUIRE(once.ok());
  m->pcc = once.value();
  EnforcementConfig cfg = wbr_mode();
  // Each instruction may execute once; the self-loop's second iteration
  // re-enters consumed code and traps.
  RunResult r = run(*m, p, cfg, 100);
  CHECK(r.trapped(TrapKind::OpBoundsViolation));
  REQUIRE(r.trap.has_value());
  CHECK(r.trap->pc == 2 * MachineState::kCodeStride);
  CHECK(r.retired == 3);
}

TEST_CASE("shadow-oracle equivalence on randomized store/load sequences") {
  std::mt19937_64 rng(0xACCE55);
  for (int trial = 0; trial < 300; ++trial) {
    // Build a random access program against one 64-byte WBR window.
    std::ostringstream src;
    src << kWbrPrologue;
    struct Op {
      bool store;
      uint32_t off;
      uint32_t size;
      size_t instr_index;  // index of the memory instruction
    };
    std::vector<Op> ops;
    // Prologue occupies instructions 0..4; each store op takes 2 (li+sw).
    size_t next_index = 5;
    for (int i = 0; i < 24; ++i) {
      const uint32_t size = 1u << (rng() % 4);
      const uint32_t off = static_cast<uint32_t>(rng() % (64 / size)) * size;
      if (rng() & 1) {
        src << "  li c6, " << i << "\n";
        src << "  s" << (size == 1 ? "b" : size == 2 ? "h" : size == 4 ? "w" : "d")
            << " c6, " << off << "(c5)\n";
        ops.push_back({true, off, size, next_index + 1});
        next_index += 2;
      } else {
        src << "  l" << (size == 1 ? "b" : size == 2 ? "h" : size == 4 ? "w" : "d")
            << " c7, " << off << "(c5)\n";
        ops.push_back({false, off, size, next_index});
        next_index += 1;
      }
    }
    src << "  halt\n";

    // Oracle: frontier plus per-byte written set with the gap-store rule.
    uint64_t frontier = 0;
    std::set<uint32_t> written;
    int deny_at = -1;
    for (size_t i = 0; i < ops.size(); ++i) {
      const Op& op = ops[i];
      if (op.store) {
        if (op.off <= frontier && frontier < op.off + op.size) {
          frontier = op.off + op.size;
        }
        for (uint32_t b = op.off; b < op.off + op.size; ++b) written.insert(b);
      } else {
        if (op.off + op.size > frontier) {
          deny_at = static_cast<int>(i);
          break;
        }
        for (uint32_t b = op.off; b < op.off + op.size; ++b) {
          REQUIRE(written.count(b) == 1);
        }
      }
    }

    RunResult r = run_src(src.str());
    if (deny_at < 0) {
      CHECK(r.clean_exit());
    } else {
      REQUIRE(r.trapped(TrapKind::OpBoundsViolation));
      CHECK(r.trap->pc == ops[deny_at].instr_index * MachineState::kCodeStride);
      CHECK(r.trap->addr == 0x8000 + ops[deny_at].off);
    }
  }
}

TEST_CASE("monotonicity: no instruction grows bounds or permissions") {
  std::mt19937_64 rng(0x5EED0010);
  int executed = 0;
  for (int trial = 0; trial < 500 && executed < 10000; ++trial) {
    std::ostringstream src;
    src << "_start:\n";
    // Seed c5..c9 with windows derived from the root.
    for (int r = 5; r <= 9; ++r) {
      const uint64_t base = 0x4000 + (rng() % 64) * 256;
      src << "  cmove c" << r << ", c3\n";
      src << "  li c10, " << base << "\n";
      src << "  csetaddr c" << r << ", c" << r << ", c10\n";
      src << "  csetbounds c" << r << ", c" << r << ", " << 16 + rng() % 240 << "\n";
    }
    for (int i = 0; i < 30; ++i) {
      const int rd = 5 + static_cast<int>(rng() % 5);
      const int rs = 5 + static_cast<int>(rng() % 5);
      switch (rng() % 6) {
        case 0: src << "  cmove c" << rd << ", c" << rs << "\n"; break;
        case 1: src << "  cincoffset c" << rd << ", c" << rs << ", "
                    << static_cast<int64_t>(rng() % 64) - 16 << "\n"; break;
        case 2: src << "  csetbounds c" << rd << ", c" << rs << ", " << rng() % 64 << "\n"; break;
        case 3: src << "  candperm c" << rd << ", c" << rs << ", " << (rng() & 31) << "\n"; break;
        case 4: src << "  csetwbrbound c" << rd << ", c" << rs << ", c0\n"; break;
        case 5: src << "  csetaddr c" << rd << ", c" << rs << ", c0\n"; break;
      }
    }
    src << "  halt\n";
    Program p = must_assemble(src.str());
    auto m = reset(1 << 20);
    REQUIRE(m.has_value());
    m->pcc.base = 0;
    m->pcc.top = 4096;
    m->pcc.addr = 0;
    EnforcementConfig cfg = wbr_mode();
    while (m->state == RunState::Running) {
      const size_t idx = m->pcc.addr / MachineState::kCodeStride;
      if (idx >= p.size()) break;
      const Instruction& ins = p.code[idx];
      const auto pre = m->regs;
      step(*m, p, cfg);
      if (m->state != RunState::Running) break;
      if (counter_class(ins.op) == CounterClass::Cap) {
        const Capability& d = m->regs[ins.rd];
        const Capability& s = pre[ins.rs1];
        if (ins.rd != 0 && d.tag) {
          CHECK(s.tag);
          CHECK(d.base >= s.base);
          CHECK(d.top <= s.top);
          CHECK(d.perms.subset_of(s.perms));
        }
        ++executed;
      }
    }
  }
  CHECK(executed >= 10000);
}
