#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "monvm/assembler.hpp"
#include "monvm/capability.hpp"
#include "monvm/codec.hpp"
#include "monvm/runtime.hpp"

namespace monvm {

enum class TrapKind : uint8_t {
  TagViolation,
  PermitLoadViolation,
  PermitStoreViolation,
  PermitExecuteViolation,
  BoundsViolation,
  OpBoundsViolation,
  AddressMaskViolation,
  RepresentabilityViolation,
  MisalignedCapAccess,
  UnknownInstruction,
  OutOfFuel,
  InvalidFree,
  OutOfMemory,
};

const char* to_string(TrapKind kind);

struct TrapReport {
  TrapKind kind = TrapKind::UnknownInstruction;
  uint64_t pc = 0;
  Capability cap;       // the capability involved, when there is one
  uint64_t addr = 0;    // faulting range [addr, addr+size)
  uint32_t size = 0;
  std::string message;
};

struct AutoInitFill {
  uint64_t pc = 0;
  uint64_t addr = 0;
  uint32_t size = 0;
};

/// Byte memory plus one validity tag per 16-byte granule.  Any plain byte
/// write overlapping a granule clears the tag; only a capability store of a
/// tagged value sets it.
class TaggedMemory {
 public:
  static constexpr uint64_t kGranule = 16;

  TaggedMemory() = default;
  explicit TaggedMemory(uint64_t size)
      : bytes_(size, 0), tags_(size / kGranule, false) {}

  uint64_t size() const { return bytes_.size(); }

  uint64_t read_int(uint64_t addr, uint32_t size) const;
  void write_int(uint64_t addr, uint32_t size, uint64_t value);
  EncodedCapability read_cap(uint64_t addr) const;  // addr 16-byte aligned
  void write_cap(uint64_t addr, const EncodedCapability& enc);
  void fill_zero(uint64_t addr, uint64_t len);
  bool granule_tag(uint64_t addr) const { return tags_[addr / kGranule]; }

 private:
  std::vector<uint8_t> bytes_;
  std::vector<bool> tags_;
};

enum class RunState : uint8_t { Running, Halted, Trapped };

/// Merged register file: a register is a capability; integers live in the
/// cursor of an untagged one.  c0 reads as zero and ignores writes.
struct MachineState {
  // Physically wider than the documented c0..c15 convention so that the
  // backend can be exercised with very large allocatable register pools.
  static constexpr size_t kNumRegs = 72;
  static constexpr uint64_t kCodeStride = 4;
  static constexpr uint64_t kHeapBase = 4096;

  std::array<Capability, kNumRegs> regs{};
  Capability pcc;
  TaggedMemory mem;
  HeapState heap;
  Counters counters;
  RunState state = RunState::Running;
  int64_t exit_code = 0;
  std::optional<TrapReport> trap;
  std::vector<int64_t> prints;
  std::vector<AutoInitFill> fills;
  uint64_t retired = 0;

  uint64_t reg_int(size_t idx) const { return idx == 0 ? 0 : regs[idx].addr; }
  const Capability& reg_cap(size_t idx) const;
  void set_reg(size_t idx, const Capability& value);
  void set_reg_int(size_t idx, uint64_t value);

  static constexpr size_t kRootReg = 3;   // boot capability
  static constexpr size_t kStackReg = 2;  // stack capability by convention
  static constexpr size_t kRaReg = 1;
  static constexpr size_t kArg0 = 4;
};

/// Boot state: zeroed registers and memory, a root capability over
/// [0, memsize) in c3.  memsize must be 16-byte aligned and at least 4 KiB.
std::optional<MachineState> reset(uint64_t memsize);

/// One fetch-check-commit-writeback cycle.  Never aborts the host; faults
/// transition the state to Trapped.
void step(MachineState& state, const Program& program, const EnforcementConfig& config);

struct RunResult {
  RunState state = RunState::Running;
  int64_t exit_code = 0;
  std::optional<TrapReport> trap;
  Counters counters;
  std::vector<int64_t> prints;
  uint64_t auto_init_fill_count = 0;
  std::vector<AutoInitFill> fills;  // first few, for reporting
  uint64_t retired = 0;

  bool clean_exit() const { return state == RunState::Halted; }
  bool trapped(TrapKind kind) const {
    return state == RunState::Trapped && trap && trap->kind == kind;
  }
};

struct RunOptions {
  EnforcementConfig enforce;
  uint64_t memsize = 1ull << 20;
  uint64_t fuel = 10'000'000;
};

RunResult run(const Program& program, const RunOptions& options);

/// Variant for pre-seeded machines (tests drive exotic register states).
RunResult run(MachineState& state, const Program& program,
              const EnforcementConfig& config, uint64_t fuel);

}  // namespace monvm
