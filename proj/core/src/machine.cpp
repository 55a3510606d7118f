#include "monvm/machine.hpp"

#include <cassert>
#include <cstring>
#include <sstream>

namespace monvm {

namespace {

constexpr uint64_t kMinMemSize = 4096;
constexpr uint64_t kNullMeta = 7ull << 49;  // disabled CP control bits

TrapKind permit_trap(AccessKind access) {
  switch (access) {
    case AccessKind::Load: return TrapKind::PermitLoadViolation;
    case AccessKind::Store: return TrapKind::PermitStoreViolation;
    case AccessKind::Fetch: return TrapKind::PermitExecuteViolation;
  }
  return TrapKind::PermitLoadViolation;
}

TrapKind deny_trap(DenyReason reason, AccessKind access) {
  switch (reason) {
    case DenyReason::TagViolation: return TrapKind::TagViolation;
    case DenyReason::PermitViolation: return permit_trap(access);
    case DenyReason::BoundsViolation: return TrapKind::BoundsViolation;
    case DenyReason::OpBoundsViolation: return TrapKind::OpBoundsViolation;
  }
  return TrapKind::BoundsViolation;
}

int64_t sign_extend(uint64_t value, uint32_t size) {
  switch (size) {
    case 1: return static_cast<int8_t>(value);
    case 2: return static_cast<int16_t>(value);
    case 4: return static_cast<int32_t>(value);
    default: return static_cast<int64_t>(value);
  }
}

}  // namespace

const char* to_string(TrapKind kind) {
  switch (kind) {
    case TrapKind::TagViolation: return "TagViolation";
    case TrapKind::PermitLoadViolation: return "PermitLoadViolation";
    case TrapKind::PermitStoreViolation: return "PermitStoreViolation";
    case TrapKind::PermitExecuteViolation: return "PermitExecuteViolation";
    case TrapKind::BoundsViolation: return "BoundsViolation";
    case TrapKind::OpBoundsViolation: return "OpBoundsViolation";
    case TrapKind::AddressMaskViolation: return "AddressMaskViolation";
    case TrapKind::RepresentabilityViolation: return "RepresentabilityViolation";
    case TrapKind::MisalignedCapAccess: return "MisalignedCapAccess";
    case TrapKind::UnknownInstruction: return "UnknownInstruction";
    case TrapKind::OutOfFuel: return "OutOfFuel";
    case TrapKind::InvalidFree: return "InvalidFree";
    case TrapKind::OutOfMemory: return "OutOfMemory";
  }
  return "?";
}

uint64_t TaggedMemory::read_int(uint64_t addr, uint32_t size) const {
  assert(addr + size <= bytes_.size());
  uint64_t v = 0;
  for (uint32_t i = 0; i < size; ++i) {
    v |= static_cast<uint64_t>(bytes_[addr + i]) << (8 * i);
  }
  return v;
}

void TaggedMemory::write_int(uint64_t addr, uint32_t size, uint64_t value) {
  assert(addr + size <= bytes_.size());
  for (uint32_t i = 0; i < size; ++i) {
    bytes_[addr + i] = static_cast<uint8_t>(value >> (8 * i));
  }
  for (uint64_t g = addr / kGranule; g <= (addr + size - 1) / kGranule; ++g) {
    tags_[g] = false;
  }
}

EncodedCapability TaggedMemory::read_cap(uint64_t addr) const {
  assert(addr % kGranule == 0 && addr + 16 <= bytes_.size());
  EncodedCapability enc;
  uint64_t lo = 0;
  uint64_t hi = 0;
  for (int i = 0; i < 8; ++i) lo |= static_cast<uint64_t>(bytes_[addr + i]) << (8 * i);
  for (int i = 0; i < 8; ++i) hi |= static_cast<uint64_t>(bytes_[addr + 8 + i]) << (8 * i);
  enc.cursor = lo;
  enc.meta = hi;
  enc.tag = tags_[addr / kGranule];
  return enc;
}

void TaggedMemory::write_cap(uint64_t addr, const EncodedCapability& enc) {
  assert(addr % kGranule == 0 && addr + 16 <= bytes_.size());
  for (int i = 0; i < 8; ++i) bytes_[addr + i] = static_cast<uint8_t>(enc.cursor >> (8 * i));
  for (int i = 0; i < 8; ++i) bytes_[addr + 8 + i] = static_cast<uint8_t>(enc.meta >> (8 * i));
  tags_[addr / kGranule] = enc.tag;
}

void TaggedMemory::fill_zero(uint64_t addr, uint64_t len) {
  assert(addr + len <= bytes_.size());
  std::memset(bytes_.data() + addr, 0, len);
  if (len == 0) return;
  for (uint64_t g = addr / kGranule; g <= (addr + len - 1) / kGranule; ++g) {
    tags_[g] = false;
  }
}

const Capability& MachineState::reg_cap(size_t idx) const {
  static const Capability kZero{};
  return idx == 0 ? kZero : regs[idx];
}

void MachineState::set_reg(size_t idx, const Capability& value) {
  if (idx == 0) return;
  regs[idx] = value;
}

void MachineState::set_reg_int(size_t idx, uint64_t value) {
  set_reg(idx, Capability::null_with_addr(value));
}

std::optional<MachineState> reset(uint64_t memsize) {
  if (memsize < kMinMemSize || memsize % TaggedMemory::kGranule != 0 ||
      memsize > kAddressSpaceTop) {
    return std::nullopt;
  }
  MachineState m;
  m.mem = TaggedMemory(memsize);

  Capability root;
  root.tag = true;
  root.perms = Permissions::all();
  root.base = 0;
  root.top = memsize;
  root.addr = 0;
  m.regs[MachineState::kRootReg] = root;

  // Heap arena between the reserved low page and the stack region.
  const uint64_t stack_size = std::min<uint64_t>(64 * 1024, memsize / 4);
  const uint64_t arena_base = MachineState::kHeapBase;
  const uint64_t arena_top = memsize - stack_size;
  Capability arena = root;
  arena.perms.execute = false;
  arena.base = arena_base;
  arena.top = arena_top;
  arena.addr = arena_base;
  // Arena bounds are grid-coarse; the per-block capabilities are exact.
  m.heap = HeapState(arena, arena_base, arena_top);

  m.pcc = root;
  m.pcc.perms = Permissions::from_bits(Permissions::kExecuteBit | Permissions::kReadBit);
  return m;
}

namespace {

struct Stepper {
  MachineState& m;
  const Program& prog;
  const EnforcementConfig& cfg;

  void trap(TrapKind kind, uint64_t pc, const Capability& cap, uint64_t addr,
            uint32_t size, std::string message) {
    TrapReport r;
    r.kind = kind;
    r.pc = pc;
    r.cap = cap;
    r.addr = addr;
    r.size = size;
    r.message = std::move(message);
    m.trap = r;
    m.state = RunState::Trapped;
  }

  MallocPolicy malloc_policy() const {
    switch (cfg.malloc_mode) {
      case EnforcementConfig::MallocMode::Zeroed:
        return MallocPolicy::Zeroed;
      case EnforcementConfig::MallocMode::Plain:
        return cfg.enforcing() ? MallocPolicy::Plain : MallocPolicy::NoCap;
      case EnforcementConfig::MallocMode::Auto:
        break;
    }
    switch (cfg.mode) {
      case EnforcementConfig::Mode::NoCap: return MallocPolicy::NoCap;
      case EnforcementConfig::Mode::PureCap: return MallocPolicy::Plain;
      case EnforcementConfig::Mode::Wbr: return MallocPolicy::OpBounds;
    }
    return MallocPolicy::Plain;
  }

  // Physical range check; the only guard left when enforcement is off.
  bool physical_ok(uint64_t addr, uint32_t size) const {
    return size <= m.mem.size() && addr <= m.mem.size() - size;
  }

  void execute(const Instruction& ins, uint64_t pc);
  void exec_load(const Instruction& ins, uint64_t pc);
  void exec_store(const Instruction& ins, uint64_t pc);
  void exec_cap_load(const Instruction& ins, uint64_t pc);
  void exec_cap_store(const Instruction& ins, uint64_t pc);
  void exec_ecall(const Instruction& ins, uint64_t pc);

  uint64_t operand2(const Instruction& ins) const {
    return ins.has_imm_operand ? static_cast<uint64_t>(ins.imm) : m.reg_int(ins.rs2);
  }

  // Cursor manipulation with the representability / masking rules: the
  // result keeps its tag only while the new cursor decodes back exactly.
  Capability with_addr(const Capability& cap, uint64_t addr) const {
    Capability out = cap;
    if (out.conditional()) addr &= kAddressSpaceTop - 1;
    out.addr = addr;
    if (out.tag && !representable(out)) out.tag = false;
    return out;
  }
};

void Stepper::exec_load(const Instruction& ins, uint64_t pc) {
  const Capability& cap = m.reg_cap(ins.rs1);
  const uint64_t ea = cap.addr + static_cast<uint64_t>(ins.imm);
  AccessDecision d = check_access(cap, ea, ins.size, AccessKind::Load, cfg);
  bool zero_fill = false;
  if (!d.allowed) {
    if (d.reason == DenyReason::OpBoundsViolation && cfg.ignore_op_bounds) {
      // proceed with the real load
    } else if (d.reason == DenyReason::OpBoundsViolation && cfg.auto_init) {
      zero_fill = true;
    } else {
      trap(deny_trap(d.reason, AccessKind::Load), pc, cap, ea, ins.size, "load");
      return;
    }
  }
  if (zero_fill) {
    m.fills.push_back({pc, ea, ins.size});
    m.set_reg_int(ins.rd, 0);
    return;
  }
  if (!physical_ok(ea, ins.size)) {
    trap(TrapKind::BoundsViolation, pc, cap, ea, ins.size, "load outside memory");
    return;
  }
  const uint64_t raw = m.mem.read_int(ea, ins.size);
  m.set_reg_int(ins.rd, static_cast<uint64_t>(sign_extend(raw, ins.size)));
  if (d.allowed && cap.conditional() &&
      tracked_operation(cap.cp) == AccessKind::Load) {
    m.set_reg(ins.rs1, advance_op_top(cap, ea, ins.size));
  }
}

void Stepper::exec_store(const Instruction& ins, uint64_t pc) {
  const Capability& cap = m.reg_cap(ins.rs1);
  const uint64_t ea = cap.addr + static_cast<uint64_t>(ins.imm);
  AccessDecision d = check_access(cap, ea, ins.size, AccessKind::Store, cfg);
  if (!d.allowed) {
    if (d.reason == DenyReason::OpBoundsViolation && cfg.ignore_op_bounds) {
      // proceed without committing a frontier update
    } else {
      trap(deny_trap(d.reason, AccessKind::Store), pc, cap, ea, ins.size, "store");
      return;
    }
  }
  if (!physical_ok(ea, ins.size)) {
    trap(TrapKind::BoundsViolation, pc, cap, ea, ins.size, "store outside memory");
    return;
  }
  m.mem.write_int(ea, ins.size, m.reg_int(ins.rs2));
  if (d.allowed && cap.conditional() &&
      tracked_operation(cap.cp) == AccessKind::Store) {
    // Commit the new frontier to the register in the writeback stage.
    m.set_reg(ins.rs1, advance_op_top(cap, ea, ins.size));
  }
}

void Stepper::exec_cap_load(const Instruction& ins, uint64_t pc) {
  const Capability& cap = m.reg_cap(ins.rs1);
  const uint64_t ea = cap.addr + static_cast<uint64_t>(ins.imm);
  if (ea % TaggedMemory::kGranule != 0) {
    trap(TrapKind::MisalignedCapAccess, pc, cap, ea, 16, "clc alignment");
    return;
  }
  AccessDecision d = check_access(cap, ea, 16, AccessKind::Load, cfg);
  bool zero_fill = false;
  if (!d.allowed) {
    if (d.reason == DenyReason::OpBoundsViolation && cfg.ignore_op_bounds) {
    } else if (d.reason == DenyReason::OpBoundsViolation && cfg.auto_init) {
      zero_fill = true;
    } else {
      trap(deny_trap(d.reason, AccessKind::Load), pc, cap, ea, 16, "clc");
      return;
    }
  }
  if (cfg.enforcing() && !cap.perms.load_cap) {
    trap(TrapKind::PermitLoadViolation, pc, cap, ea, 16, "clc without load-cap permission");
    return;
  }
  if (zero_fill) {
    m.fills.push_back({pc, ea, 16});
    m.set_reg_int(ins.rd, 0);
    return;
  }
  if (!physical_ok(ea, 16)) {
    trap(TrapKind::BoundsViolation, pc, cap, ea, 16, "clc outside memory");
    return;
  }
  m.set_reg(ins.rd, decode(m.mem.read_cap(ea)).cap);
  if (d.allowed && cap.conditional() &&
      tracked_operation(cap.cp) == AccessKind::Load) {
    m.set_reg(ins.rs1, advance_op_top(cap, ea, 16));
  }
}

void Stepper::exec_cap_store(const Instruction& ins, uint64_t pc) {
  const Capability& cap = m.reg_cap(ins.rs1);
  const uint64_t ea = cap.addr + static_cast<uint64_t>(ins.imm);
  if (ea % TaggedMemory::kGranule != 0) {
    trap(TrapKind::MisalignedCapAccess, pc, cap, ea, 16, "csc alignment");
    return;
  }
  AccessDecision d = check_access(cap, ea, 16, AccessKind::Store, cfg);
  if (!d.allowed) {
    if (d.reason == DenyReason::OpBoundsViolation && cfg.ignore_op_bounds) {
    } else {
      trap(deny_trap(d.reason, AccessKind::Store), pc, cap, ea, 16, "csc");
      return;
    }
  }
  if (cfg.enforcing() && !cap.perms.store_cap) {
    trap(TrapKind::PermitStoreViolation, pc, cap, ea, 16, "csc without store-cap permission");
    return;
  }
  if (!physical_ok(ea, 16)) {
    trap(TrapKind::BoundsViolation, pc, cap, ea, 16, "csc outside memory");
    return;
  }
  const Capability& value = m.reg_cap(ins.rs2);
  EncodedCapability enc;
  if (value.tag) {
    auto encoded = encode(value);
    if (!encoded.ok()) {
      trap(TrapKind::RepresentabilityViolation, pc, value, ea, 16, "csc of unrepresentable value");
      return;
    }
    enc = encoded.value();
  } else {
    enc.meta = kNullMeta;
    enc.cursor = value.addr;
    enc.tag = false;
  }
  m.mem.write_cap(ea, enc);
  if (d.allowed && cap.conditional() &&
      tracked_operation(cap.cp) == AccessKind::Store) {
    m.set_reg(ins.rs1, advance_op_top(cap, ea, 16));
  }
}

void Stepper::exec_ecall(const Instruction& ins, uint64_t pc) {
  switch (ins.imm) {
    case 0:  // EXIT
      m.state = RunState::Halted;
      m.exit_code = static_cast<int64_t>(m.reg_int(MachineState::kArg0));
      return;
    case 1:    // MALLOC
    case 4: {  // MALLOC_ZEROED
      MallocPolicy policy = ins.imm == 4 ? MallocPolicy::Zeroed : malloc_policy();
      auto r = rt_malloc(m.heap, m.mem, m.reg_int(MachineState::kArg0), policy,
                         m.counters);
      if (!r.ok()) {
        trap(TrapKind::OutOfMemory, pc, m.reg_cap(MachineState::kArg0),
             m.reg_int(MachineState::kArg0), 0, "malloc");
        return;
      }
      m.set_reg(MachineState::kArg0, r.value());
      return;
    }
    case 2: {  // FREE
      auto r = rt_free(m.heap, m.reg_cap(MachineState::kArg0), m.counters);
      if (!r.ok()) {
        trap(TrapKind::InvalidFree, pc, m.reg_cap(MachineState::kArg0), 0, 0, "free");
      }
      return;
    }
    case 3:  // PRINT_INT
      m.prints.push_back(static_cast<int64_t>(m.reg_int(MachineState::kArg0)));
      return;
    default:
      trap(TrapKind::UnknownInstruction, pc, {}, 0, 0,
           "unknown ecall code " + std::to_string(ins.imm));
  }
}

void Stepper::execute(const Instruction& ins, uint64_t pc) {
  switch (ins.op) {
    case Opcode::Li:
      m.set_reg_int(ins.rd, static_cast<uint64_t>(ins.imm));
      break;
    case Opcode::Mv:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1));
      break;
    case Opcode::Add:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) + m.reg_int(ins.rs2));
      break;
    case Opcode::Sub:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) - m.reg_int(ins.rs2));
      break;
    case Opcode::Mul:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) * m.reg_int(ins.rs2));
      break;
    case Opcode::And:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) & m.reg_int(ins.rs2));
      break;
    case Opcode::Or:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) | m.reg_int(ins.rs2));
      break;
    case Opcode::Xor:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) ^ m.reg_int(ins.rs2));
      break;
    case Opcode::Slt:
      m.set_reg_int(ins.rd, static_cast<int64_t>(m.reg_int(ins.rs1)) <
                                    static_cast<int64_t>(m.reg_int(ins.rs2))
                                ? 1
                                : 0);
      break;
    case Opcode::Addi:
      m.set_reg_int(ins.rd, m.reg_int(ins.rs1) + static_cast<uint64_t>(ins.imm));
      break;
    case Opcode::Beq:
    case Opcode::Bne:
    case Opcode::Blt:
    case Opcode::Bge: {
      const int64_t a = static_cast<int64_t>(m.reg_int(ins.rs1));
      const int64_t b = static_cast<int64_t>(m.reg_int(ins.rs2));
      bool taken = false;
      switch (ins.op) {
        case Opcode::Beq: taken = a == b; break;
        case Opcode::Bne: taken = a != b; break;
        case Opcode::Blt: taken = a < b; break;
        default: taken = a >= b; break;
      }
      if (taken) m.pcc.addr = static_cast<uint64_t>(ins.imm) * MachineState::kCodeStride;
      break;
    }
    case Opcode::Jal:
      m.set_reg(ins.rd, m.pcc);  // link: executable capability at pc+4
      m.pcc.addr = static_cast<uint64_t>(ins.imm) * MachineState::kCodeStride;
      break;
    case Opcode::Jalr: {
      const Capability target = m.reg_cap(ins.rs1);
      m.set_reg(ins.rd, m.pcc);
      m.pcc = target;
      break;
    }
    case Opcode::Halt:
      m.state = RunState::Halted;
      m.exit_code = static_cast<int64_t>(m.reg_int(MachineState::kArg0));
      break;
    case Opcode::CMove:
      m.set_reg(ins.rd, m.reg_cap(ins.rs1));
      break;
    case Opcode::CIncOffset: {
      const Capability& cap = m.reg_cap(ins.rs1);
      m.set_reg(ins.rd, with_addr(cap, cap.addr + operand2(ins)));
      break;
    }
    case Opcode::CSetAddr: {
      const Capability& cap = m.reg_cap(ins.rs1);
      m.set_reg(ins.rd, with_addr(cap, operand2(ins)));
      break;
    }
    case Opcode::CSetBounds: {
      auto r = set_bounds(m.reg_cap(ins.rs1), operand2(ins));
      if (!r.ok()) {
        TrapKind kind = r.error() == CapErr::TagViolation ? TrapKind::TagViolation
                        : r.error() == CapErr::RepresentabilityViolation
                            ? TrapKind::RepresentabilityViolation
                            : TrapKind::BoundsViolation;
        trap(kind, pc, m.reg_cap(ins.rs1), m.reg_cap(ins.rs1).addr, 0, "csetbounds");
        return;
      }
      m.set_reg(ins.rd, r.value());
      break;
    }
    case Opcode::CAndPerm: {
      Capability cap = m.reg_cap(ins.rs1);
      cap.perms = cap.perms & Permissions::from_bits(static_cast<uint32_t>(operand2(ins)));
      m.set_reg(ins.rd, cap);
      break;
    }
    case Opcode::CGetAddr:
      m.set_reg_int(ins.rd, m.reg_cap(ins.rs1).addr);
      break;
    case Opcode::CGetBase:
      m.set_reg_int(ins.rd, m.reg_cap(ins.rs1).base);
      break;
    case Opcode::CGetLen:
      m.set_reg_int(ins.rd, m.reg_cap(ins.rs1).length());
      break;
    case Opcode::CGetOpTop: {
      const Capability& cap = m.reg_cap(ins.rs1);
      m.set_reg_int(ins.rd, cap.conditional() ? cap.op_top : cap.top);
      break;
    }
    case Opcode::CSetOpBounds: {
      auto r = set_op_bounds(m.reg_cap(ins.rs1), ins.cp_kind, operand2(ins));
      if (!r.ok()) {
        TrapKind kind;
        switch (r.error()) {
          case CapErr::TagViolation: kind = TrapKind::TagViolation; break;
          case CapErr::AddressMaskViolation: kind = TrapKind::AddressMaskViolation; break;
          case CapErr::OutOfBounds: kind = TrapKind::BoundsViolation; break;
          case CapErr::OpBoundsIncrease: kind = TrapKind::OpBoundsViolation; break;
          default: kind = TrapKind::RepresentabilityViolation; break;
        }
        trap(kind, pc, m.reg_cap(ins.rs1), m.reg_cap(ins.rs1).addr, 0, "csetopbounds");
        return;
      }
      m.set_reg(ins.rd, r.value());
      break;
    }
    case Opcode::Load:
      exec_load(ins, pc);
      break;
    case Opcode::Store:
      exec_store(ins, pc);
      break;
    case Opcode::CLoadCap:
      exec_cap_load(ins, pc);
      break;
    case Opcode::CStoreCap:
      exec_cap_store(ins, pc);
      break;
    case Opcode::ECall:
      exec_ecall(ins, pc);
      break;
  }
}

}  // namespace

void step(MachineState& m, const Program& prog, const EnforcementConfig& cfg) {
  if (m.state != RunState::Running) return;
  Stepper s{m, prog, cfg};

  const uint64_t pc = m.pcc.addr;
  const uint64_t index = pc / MachineState::kCodeStride;
  if (pc % MachineState::kCodeStride != 0 || index >= prog.size()) {
    s.trap(TrapKind::BoundsViolation, pc, m.pcc, pc, 4, "fetch outside program");
    return;
  }
  AccessDecision fetch = check_access(m.pcc, pc, 4, AccessKind::Fetch, cfg);
  if (!fetch.allowed) {
    s.trap(deny_trap(fetch.reason, AccessKind::Fetch), pc, m.pcc, pc, 4, "fetch");
    return;
  }
  if (m.pcc.conditional() && tracked_operation(m.pcc.cp) == AccessKind::Fetch) {
    m.pcc = advance_op_top(m.pcc, pc, 4);
  }

  const Instruction& ins = prog.code[index];
  m.pcc.addr = pc + MachineState::kCodeStride;

  switch (counter_class(ins.op)) {
    case CounterClass::Integer: m.counters.integer += 1; break;
    case CounterClass::Branch: m.counters.branch += 1; break;
    case CounterClass::Load: m.counters.load += 1; break;
    case CounterClass::Store: m.counters.store += 1; break;
    case CounterClass::Cap: m.counters.cap += 1; break;
    case CounterClass::Runtime: m.counters.runtime += 1; break;
  }

  s.execute(ins, pc);
  if (m.state != RunState::Trapped) m.retired += 1;
}

RunResult run(MachineState& m, const Program& prog, const EnforcementConfig& cfg,
              uint64_t fuel) {
  // Executable window over the program's code space, rounded up so the pcc
  // (and link capabilities derived from it) stay representable.  Runaway
  // execution into the rounding slack is stopped by the program-size guard.
  Capability probe;
  probe.tag = true;
  probe.perms = Permissions::all();
  probe.base = 0;
  probe.top = kAddressSpaceTop;
  probe.addr = 0;
  auto code_window = set_bounds(probe, prog.size() * MachineState::kCodeStride);
  m.pcc.base = 0;
  m.pcc.top = code_window.ok() ? code_window.value().top
                               : prog.size() * MachineState::kCodeStride;
  m.pcc.addr = prog.entry * MachineState::kCodeStride;

  for (uint64_t i = 0; i < fuel && m.state == RunState::Running; ++i) {
    step(m, prog, cfg);
  }
  if (m.state == RunState::Running) {
    TrapReport r;
    r.kind = TrapKind::OutOfFuel;
    r.pc = m.pcc.addr;
    r.message = "fuel exhausted";
    m.trap = r;
    m.state = RunState::Trapped;
  }

  RunResult out;
  out.state = m.state;
  out.exit_code = m.exit_code;
  out.trap = m.trap;
  out.counters = m.counters;
  out.prints = m.prints;
  out.auto_init_fill_count = m.fills.size();
  out.fills.assign(m.fills.begin(),
                   m.fills.size() > 32 ? m.fills.begin() + 32 : m.fills.end());
  out.retired = m.retired;
  return out;
}

RunResult run(const Program& prog, const RunOptions& options) {
  auto machine = reset(options.memsize);
  if (!machine) {
    RunResult out;
    out.state = RunState::Trapped;
    TrapReport r;
    r.kind = TrapKind::UnknownInstruction;
    r.message = "invalid memory configuration";
    out.trap = r;
    return out;
  }
  return run(*machine, prog, options.enforce, options.fuel);
}

}  // namespace monvm
