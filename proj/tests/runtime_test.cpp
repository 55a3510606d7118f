#include "monvm/runtime.hpp"

#include <sstream>

#include "doctest.h"
#include "monvm/machine.hpp"

using namespace monvm;

namespace {

Program must_assemble(const std::string& src) {
  auto r = assemble(src);
  REQUIRE(r.ok());
  return r.value();
}

RunResult run_src(const std::string& src, EnforcementConfig cfg) {
  RunOptions opts;
  opts.enforce = cfg;
  return run(must_assemble(src), opts);
}

EnforcementConfig wbr_mode() {
  EnforcementConfig cfg;
  cfg.mode = EnforcementConfig::Mode::Wbr;
  return cfg;
}

struct HeapFixture {
  MachineState m;
  HeapFixture() { m = *reset(1 << 20); }
  Expected<Capability, RuntimeErr> malloc_with(uint64_t size, MallocPolicy policy) {
    return rt_malloc(m.heap, m.mem, size, policy, m.counters);
  }
};

}  // namespace

TEST_CASE("rt_malloc hands out write-before-read capabilities") {
  HeapFixture h;
  auto r = h.malloc_with(32, MallocPolicy::OpBounds);
  REQUIRE(r.ok());
  const Capability& cap = r.value();
  CHECK(cap.tag);
  CHECK(cap.cp == CpKind::WriteBeforeRead);
  CHECK(cap.op_top == cap.base);
  CHECK(cap.length() == 32);
  CHECK(cap.addr == cap.base);
  CHECK_FALSE(cap.perms.execute);

  // Fresh-allocation unreadability, checked through the access gate.
  EnforcementConfig cfg = wbr_mode();
  for (uint64_t off = 0; off < 32; off += 8) {
    CHECK_FALSE(check_access(cap, cap.base + off, 8, AccessKind::Load, cfg).allowed);
  }
  CHECK(check_access(cap, cap.base, 8, AccessKind::Store, cfg).allowed);
}

TEST_CASE("rt_malloc zeroed variant fills memory and stays conventional") {
  HeapFixture h;
  const Counters before = h.m.counters;
  auto r = h.malloc_with(32, MallocPolicy::Zeroed);
  REQUIRE(r.ok());
  CHECK(r.value().cp == CpKind::Disabled);
  CHECK(h.m.counters.store - before.store >= 4);
  for (uint64_t off = 0; off < 32; ++off) {
    CHECK(h.m.mem.read_int(r.value().base + off, 1) == 0);
  }
}

TEST_CASE("rt_malloc rejects degenerate sizes") {
  HeapFixture h;
  CHECK_FALSE(h.malloc_with(0, MallocPolicy::OpBounds).ok());
  CHECK_FALSE(h.malloc_with(1ull << 40, MallocPolicy::OpBounds).ok());
}

TEST_CASE("rt_free recycles blocks and rejects bad frees") {
  HeapFixture h;
  auto a = h.malloc_with(64, MallocPolicy::OpBounds);
  REQUIRE(a.ok());
  const uint64_t base = a.value().base;

  REQUIRE(rt_free(h.m.heap, a.value(), h.m.counters).ok());
  auto b = h.malloc_with(64, MallocPolicy::OpBounds);
  REQUIRE(b.ok());
  CHECK(b.value().base == base);  // same block reused

  // Double free.
  REQUIRE(rt_free(h.m.heap, b.value(), h.m.counters).ok());
  auto dbl = rt_free(h.m.heap, b.value(), h.m.counters);
  REQUIRE_FALSE(dbl.ok());
  CHECK(dbl.error() == RuntimeErr::InvalidFree);

  // Free of something that was never allocated.
  auto bogus = rt_free(h.m.heap, h.m.regs[MachineState::kRootReg], h.m.counters);
  REQUIRE_FALSE(bogus.ok());

  Capability untagged;
  CHECK_FALSE(rt_free(h.m.heap, untagged, h.m.counters).ok());
}

TEST_CASE("blocks never overlap each other or their headers") {
  HeapFixture h;
  std::vector<std::pair<uint64_t, uint64_t>> regions;  // [header, top)
  for (uint64_t size : {17u, 32u, 100u, 4096u, 16u, 8192u, 5000u}) {
    auto r = h.malloc_with(size, MallocPolicy::OpBounds);
    REQUIRE(r.ok());
    const uint64_t lo = r.value().base - HeapState::kHeaderSize;
    const uint64_t hi = r.value().top;
    CHECK(r.value().length() >= size);
    for (auto [olo, ohi] : regions) {
      CHECK((hi <= olo || lo >= ohi));
    }
    regions.emplace_back(lo, hi);
  }
}

TEST_CASE("operation-bound cost is one instruction regardless of size") {
  for (uint64_t size : {32u, 256u, 4096u}) {
    HeapFixture plain;
    HeapFixture wbr;
    plain.malloc_with(size, MallocPolicy::Plain);
    wbr.malloc_with(size, MallocPolicy::OpBounds);
    const uint64_t delta =
        wbr.m.counters.total() - plain.m.counters.total();
    CHECK(delta == 1);
  }
}

TEST_CASE("zero-fill cost scales exactly with the block size") {
  auto extra = [&](uint64_t size) {
    HeapFixture plain;
    HeapFixture zero;
    plain.malloc_with(size, MallocPolicy::Plain);
    zero.malloc_with(size, MallocPolicy::Zeroed);
    return zero.m.counters.total() - plain.m.counters.total();
  };
  const uint64_t small = extra(32);
  const uint64_t large = extra(4096);
  CHECK(large == small * (4096 / 32));
}

TEST_CASE("guest ABI: malloc, free, print, exit") {
  const char* program =
      "_start:\n"
      "  li c4, 32\n"
      "  ecall 1\n"        // malloc -> c4
      "  cmove c5, c4\n"
      "  li c6, 11\n"
      "  sd c6, 0(c5)\n"
      "  ld c7, 0(c5)\n"
      "  mv c4, c7\n"
      "  ecall 3\n"        // print
      "  cmove c4, c5\n"
      "  ecall 2\n"        // free
      "  li c4, 0\n"
      "  ecall 0\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.clean_exit());
  CHECK(r.prints == std::vector<int64_t>{11});
}

TEST_CASE("fresh heap memory is unreadable before the first store") {
  const char* program =
      "_start:\n"
      "  li c4, 32\n"
      "  ecall 1\n"
      "  ld c7, 8(c4)\n"
      "  halt\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.trapped(TrapKind::OpBoundsViolation));

  EnforcementConfig purecap;
  purecap.mode = EnforcementConfig::Mode::PureCap;
  RunResult ok = run_src(program, purecap);
  CHECK(ok.clean_exit());
}

TEST_CASE("reused blocks do not leak the previous tenant's data") {
  const char* program =
      "_start:\n"
      "  li c4, 32\n"
      "  ecall 1\n"
      "  cmove c5, c4\n"
      "  li c6, 0x5ec7e7\n"
      "  sd c6, 0(c5)\n"   // first tenant writes a secret
      "  cmove c4, c5\n"
      "  ecall 2\n"        // free
      "  li c4, 32\n"
      "  ecall 1\n"        // same block comes back
      "  ld c7, 0(c4)\n"   // second tenant reads before writing
      "  halt\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.trapped(TrapKind::OpBoundsViolation));

  // The machine still has the secret in memory; only the gate hides it.
  EnforcementConfig purecap;
  purecap.mode = EnforcementConfig::Mode::PureCap;
  RunResult leak = run_src(program, purecap);
  CHECK(leak.clean_exit());
}

TEST_CASE("malloc_zeroed ABI reads back zeros without stores") {
  const char* program =
      "_start:\n"
      "  li c4, 64\n"
      "  ecall 4\n"
      "  ld c7, 24(c4)\n"
      "  mv c4, c7\n"
      "  ecall 3\n"
      "  halt\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.clean_exit());
  CHECK(r.prints == std::vector<int64_t>{0});
}

TEST_CASE("invalid frees trap the machine") {
  const char* program =
      "_start:\n"
      "  cmove c4, c3\n"
      "  ecall 2\n"
      "  halt\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.trapped(TrapKind::InvalidFree));
}

TEST_CASE("out of memory traps rather than aborts") {
  const char* program =
      "_start:\n"
      "  li c4, 0\n"
      "  ecall 1\n"
      "  halt\n";
  RunResult r = run_src(program, wbr_mode());
  CHECK(r.trapped(TrapKind::OutOfMemory));
}
