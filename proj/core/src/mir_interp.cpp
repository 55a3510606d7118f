#include "monvm/mir_interp.hpp"

#include <bit>
#include <map>
#include <optional>
#include <vector>

namespace monvm::mir {

namespace {

struct Value {
  bool is_ptr = false;
  int64_t i = 0;        // integer payload
  uint32_t region = 0;  // pointer payload
  uint64_t offset = 0;
};

struct Region {
  std::vector<uint8_t> bytes;
  // One canonical frontier per allocation: the interpreter's conditional
  // state is region-level, so stale-copy hazards cannot occur here.
  bool conditional = false;
  uint64_t frontier = 0;
  bool freed = false;
  std::map<uint64_t, Value> cap_slots;  // 16-byte capability values
};

struct Exec {
  const Module& mod;
  const InterpOptions& opts;
  std::vector<Region> regions;
  std::vector<int64_t> prints;
  uint64_t fuel;
  std::optional<InterpTrap> trap;
  std::optional<int64_t> exited;

  explicit Exec(const Module& m, const InterpOptions& o)
      : mod(m), opts(o), fuel(o.fuel) {}

  bool stop() const { return trap.has_value() || exited.has_value(); }

  void fault(std::string kind, std::string detail) {
    if (!trap) trap = InterpTrap{std::move(kind), std::move(detail)};
  }

  uint32_t new_region(uint64_t size, bool conditional) {
    regions.push_back(Region{std::vector<uint8_t>(size, 0), conditional, 0, false, {}});
    return static_cast<uint32_t>(regions.size() - 1);
  }

  bool range_ok(const Value& p, uint64_t size, const Instr& ins) {
    if (!p.is_ptr) {
      fault("null-deref", "line " + std::to_string(ins.line));
      return false;
    }
    Region& r = regions[p.region];
    if (p.offset + size > r.bytes.size()) {
      fault("bounds", "line " + std::to_string(ins.line));
      return false;
    }
    return true;
  }

  void clobber_cap_slots(Region& r, uint64_t offset, uint64_t size) {
    auto it = r.cap_slots.lower_bound(offset >= 15 ? offset - 15 : 0);
    while (it != r.cap_slots.end() && it->first < offset + size) {
      it = r.cap_slots.erase(it);
    }
  }

  void advance_frontier(Region& r, uint64_t offset, uint64_t size) {
    if (!r.conditional) return;
    if (offset <= r.frontier && r.frontier < offset + size) {
      r.frontier = std::min<uint64_t>(offset + size, r.bytes.size());
    }
  }

  bool readable(const Region& r, uint64_t offset, uint64_t size) const {
    if (!r.conditional || !opts.enforce_wbr) return true;
    return offset + size <= r.frontier;
  }

  Value call_function(const Function& fn, const std::vector<Value>& args);

  void builtin(const Instr& ins, std::vector<Value>& env) {
    if (ins.callee == "print_int") {
      prints.push_back(env[ins.args[0]].i);
    } else if (ins.callee == "exit") {
      exited = env[ins.args[0]].i;
    } else if (ins.callee == "malloc" || ins.callee == "malloc_zeroed") {
      const int64_t size = env[ins.args[0]].i;
      if (size <= 0) {
        fault("out-of-memory", "line " + std::to_string(ins.line));
        return;
      }
      const uint64_t cls = std::bit_ceil(std::max<uint64_t>(size, 16));
      const bool conditional = ins.callee == "malloc" && opts.enforce_wbr;
      const uint32_t r = new_region(cls, conditional);
      if (ins.result != kNoValue) env[ins.result] = Value{true, 0, r, 0};
    } else if (ins.callee == "free") {
      const Value& p = env[ins.args[0]];
      if (!p.is_ptr || regions[p.region].freed) {
        fault("invalid-free", "line " + std::to_string(ins.line));
        return;
      }
      regions[p.region].freed = true;
    }
  }
};

Value Exec::call_function(const Function& fn, const std::vector<Value>& args) {
  std::vector<Value> env(fn.value_names.size());
  for (size_t i = 0; i < args.size(); ++i) env[i] = args[i];

  uint32_t block = 0;
  std::optional<uint32_t> came_from;
  while (!stop()) {
    const Block& blk = fn.blocks[block];
    // Phis read their operands atomically on entry.
    std::vector<std::pair<ValueId, Value>> phi_updates;
    size_t first = 0;
    while (first < blk.instrs.size() && blk.instrs[first].op == Op::Phi) {
      const Instr& phi = blk.instrs[first];
      for (const auto& [v, pred] : phi.incomings) {
        if (came_from && pred == *came_from) {
          phi_updates.emplace_back(phi.result, env[v]);
        }
      }
      ++first;
    }
    for (auto& [id, v] : phi_updates) env[id] = v;

    for (size_t i = first; i < blk.instrs.size(); ++i) {
      const Instr& ins = blk.instrs[i];
      if (fuel == 0) {
        fault("fuel", "interpreter fuel exhausted");
        return {};
      }
      --fuel;
      switch (ins.op) {
        case Op::Alloca: {
          const uint32_t r = new_region(static_cast<uint64_t>(ins.imm), false);
          env[ins.result] = Value{true, 0, r, 0};
          break;
        }
        case Op::StackCap:
          env[ins.result] = env[ins.a];
          break;
        case Op::SetOpBounds: {
          Value p = env[ins.a];
          if (!p.is_ptr) {
            fault("null-deref", "line " + std::to_string(ins.line));
            break;
          }
          Region& r = regions[p.region];
          const uint64_t want = static_cast<uint64_t>(ins.imm);
          if (want > r.bytes.size()) {
            fault("bounds", "setopbounds beyond region");
            break;
          }
          if (r.conditional && want > r.frontier) {
            fault("op-bounds-increase", "line " + std::to_string(ins.line));
            break;
          }
          r.conditional = true;
          r.frontier = want;
          env[ins.result] = p;
          break;
        }
        case Op::Load: {
          const Value p = env[ins.a];
          const uint64_t width = ins.type == Type::Cap ? 16 : 8;
          if (!range_ok(p, width, ins)) break;
          Region& r = regions[p.region];
          if (!readable(r, p.offset, width)) {
            fault("uninit-read", "line " + std::to_string(ins.line) + " offset " +
                                     std::to_string(p.offset));
            break;
          }
          if (ins.type == Type::Cap) {
            if (p.offset % 16 != 0) {
              fault("misaligned", "line " + std::to_string(ins.line));
              break;
            }
            auto it = r.cap_slots.find(p.offset);
            env[ins.result] = it == r.cap_slots.end() ? Value{} : it->second;
          } else {
            uint64_t v = 0;
            for (int bi = 0; bi < 8; ++bi) {
              v |= static_cast<uint64_t>(r.bytes[p.offset + bi]) << (8 * bi);
            }
            env[ins.result] = Value{false, static_cast<int64_t>(v), 0, 0};
          }
          break;
        }
        case Op::Store: {
          const Value p = env[ins.b];
          const uint64_t width = ins.type == Type::Cap ? 16 : 8;
          if (!range_ok(p, width, ins)) break;
          Region& r = regions[p.region];
          if (ins.type == Type::Cap) {
            if (p.offset % 16 != 0) {
              fault("misaligned", "line " + std::to_string(ins.line));
              break;
            }
            clobber_cap_slots(r, p.offset, 16);
            r.cap_slots[p.offset] = env[ins.a];
            for (int bi = 0; bi < 16; ++bi) r.bytes[p.offset + bi] = 0;
          } else {
            clobber_cap_slots(r, p.offset, 8);
            const uint64_t v = static_cast<uint64_t>(env[ins.a].i);
            for (int bi = 0; bi < 8; ++bi) {
              r.bytes[p.offset + bi] = static_cast<uint8_t>(v >> (8 * bi));
            }
          }
          advance_frontier(r, p.offset, width);
          break;
        }
        case Op::Gep: {
          Value p = env[ins.a];
          if (!p.is_ptr) {
            fault("null-deref", "line " + std::to_string(ins.line));
            break;
          }
          p.offset += static_cast<uint64_t>(env[ins.b].i);
          env[ins.result] = p;
          break;
        }
        case Op::Pin:
          env[ins.result] = env[ins.a];
          break;
        case Op::BinOp: {
          const int64_t x = env[ins.a].i;
          const int64_t y = env[ins.b].i;
          int64_t out = 0;
          switch (ins.bin) {
            case BinKind::Add: out = x + y; break;
            case BinKind::Sub: out = x - y; break;
            case BinKind::Mul: out = x * y; break;
            case BinKind::And: out = x & y; break;
            case BinKind::Or: out = x | y; break;
            case BinKind::Xor: out = x ^ y; break;
            case BinKind::Slt: out = x < y ? 1 : 0; break;
          }
          env[ins.result] = Value{false, out, 0, 0};
          break;
        }
        case Op::Const:
          env[ins.result] = Value{false, ins.imm, 0, 0};
          break;
        case Op::Call: {
          if (is_builtin(ins.callee)) {
            builtin(ins, env);
            break;
          }
          const Function* callee = mod.find(ins.callee);
          std::vector<Value> args;
          args.reserve(ins.args.size());
          for (ValueId v : ins.args) args.push_back(env[v]);
          Value result = call_function(*callee, args);
          if (ins.result != kNoValue) env[ins.result] = result;
          break;
        }
        case Op::Phi:
          break;  // handled at block entry
        case Op::Br:
          came_from = block;
          block = ins.target;
          break;
        case Op::CondBr:
          came_from = block;
          block = env[ins.a].i != 0 ? ins.target : ins.target2;
          break;
        case Op::Ret:
          return ins.a != kNoValue ? env[ins.a] : Value{};
      }
      if (stop()) return {};
      if (ins.op == Op::Br || ins.op == Op::CondBr) break;
    }
  }
  return {};
}

}  // namespace

InterpResult interpret(const Module& module, const InterpOptions& options) {
  InterpResult out;
  const Function* main_fn = module.find("main");
  if (!main_fn) {
    out.trap = InterpTrap{"no-main", "module has no @main"};
    return out;
  }
  Exec exec(module, options);
  Value ret = exec.call_function(*main_fn, {});
  out.prints = std::move(exec.prints);
  if (exec.trap) {
    out.trap = exec.trap;
  } else if (exec.exited) {
    out.exit_code = *exec.exited;
  } else if (main_fn->has_ret) {
    out.exit_code = ret.i;
  }
  return out;
}

}  // namespace monvm::mir
