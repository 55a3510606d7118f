#include "monvm/mir_passes.hpp"

#include <map>
#include <set>
#include <vector>

namespace monvm::mir {

namespace {

// Applies a value substitution everywhere a value can appear.
void rewrite_operand(ValueId& v, const std::map<ValueId, ValueId>& repl) {
  auto it = repl.find(v);
  while (it != repl.end()) {
    v = it->second;
    it = repl.find(v);
  }
}

void rewrite_instr(Instr& ins, const std::map<ValueId, ValueId>& repl) {
  if (ins.a != kNoValue) rewrite_operand(ins.a, repl);
  if (ins.b != kNoValue) rewrite_operand(ins.b, repl);
  for (ValueId& v : ins.args) rewrite_operand(v, repl);
  for (auto& [v, blk] : ins.incomings) rewrite_operand(v, repl);
}

void rewrite_function(Function& fn, const std::map<ValueId, ValueId>& repl) {
  for (auto& blk : fn.blocks) {
    for (auto& ins : blk.instrs) rewrite_instr(ins, repl);
  }
}

struct DefMap {
  std::vector<const Instr*> def;  // by value id; null for params
  std::vector<uint32_t> def_block;

  explicit DefMap(const Function& fn) {
    def.assign(fn.value_names.size(), nullptr);
    def_block.assign(fn.value_names.size(), 0);
    for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
      for (const auto& ins : fn.blocks[b].instrs) {
        if (ins.result != kNoValue) {
          def[ins.result] = &ins;
          def_block[ins.result] = b;
        }
      }
    }
  }
};

}  // namespace

Module pass_optimize(const Module& module) {
  Module out = module;
  for (auto& fn : out.functions) {
    bool changed = true;
    int guard = 0;
    while (changed && ++guard < 16) {
      changed = false;
      // Constant values currently known.
      std::map<ValueId, int64_t> consts;
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::Const) consts[ins.result] = ins.imm;
        }
      }
      std::map<ValueId, ValueId> repl;
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::BinOp) {
            auto x = consts.find(ins.a);
            auto y = consts.find(ins.b);
            if (x != consts.end() && y != consts.end()) {
              int64_t v = 0;
              switch (ins.bin) {
                case BinKind::Add: v = x->second + y->second; break;
                case BinKind::Sub: v = x->second - y->second; break;
                case BinKind::Mul: v = x->second * y->second; break;
                case BinKind::And: v = x->second & y->second; break;
                case BinKind::Or: v = x->second | y->second; break;
                case BinKind::Xor: v = x->second ^ y->second; break;
                case BinKind::Slt: v = x->second < y->second ? 1 : 0; break;
              }
              ins.op = Op::Const;
              ins.imm = v;
              ins.a = ins.b = kNoValue;
              changed = true;
            }
          } else if (ins.op == Op::Gep) {
            // A zero-offset gep is a pointer copy; collapse it.
            auto off = consts.find(ins.b);
            if (off != consts.end() && off->second == 0) {
              repl[ins.result] = ins.a;
              changed = true;
            }
          } else if (ins.op == Op::Phi && !ins.incomings.empty()) {
            ValueId first = ins.incomings[0].first;
            bool same = first != ins.result;
            for (const auto& [v, b] : ins.incomings) {
              if (v != first) same = false;
            }
            if (same) {
              repl[ins.result] = first;
              changed = true;
            }
          }
        }
      }
      if (!repl.empty()) {
        // Drop the collapsed definitions, then rewrite the remaining uses.
        for (auto& blk : fn.blocks) {
          std::vector<Instr> kept;
          for (auto& ins : blk.instrs) {
            if (ins.result != kNoValue && repl.count(ins.result)) continue;
            kept.push_back(ins);
          }
          blk.instrs = std::move(kept);
        }
        rewrite_function(fn, repl);
      }
      // Dead pure definitions.
      std::set<ValueId> used;
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.a != kNoValue) used.insert(ins.a);
          if (ins.b != kNoValue) used.insert(ins.b);
          for (ValueId v : ins.args) used.insert(v);
          for (auto& [v, b] : ins.incomings) used.insert(v);
        }
      }
      for (auto& blk : fn.blocks) {
        std::vector<Instr> kept;
        for (auto& ins : blk.instrs) {
          const bool pure = ins.op == Op::Const || ins.op == Op::BinOp ||
                            ins.op == Op::Gep || ins.op == Op::Phi;
          if (pure && ins.result != kNoValue && !used.count(ins.result)) {
            changed = true;
            continue;
          }
          kept.push_back(ins);
        }
        blk.instrs = std::move(kept);
      }
    }
  }
  return out;
}

Module pass_cp_instrument(const Module& module, InstrumentMode mode) {
  Module out = module;
  for (auto& fn : out.functions) {
    // Collect the allocas this mode selects.
    std::vector<ValueId> selected;
    for (auto& blk : fn.blocks) {
      for (auto& ins : blk.instrs) {
        if (ins.op != Op::Alloca) continue;
        const bool pick = mode == InstrumentMode::AllStack ||
                          (mode == InstrumentMode::AnnotatedFunctions && fn.wbr_function) ||
                          (mode == InstrumentMode::AnnotatedVariables && ins.wbr_annotated);
        if (pick) selected.push_back(ins.result);
      }
    }
    for (ValueId alloca_v : selected) {
      // Find the alloca and any existing bounded stack capability for it.
      Instr* alloca_ins = nullptr;
      Instr* stackcap_ins = nullptr;
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::Alloca && ins.result == alloca_v) alloca_ins = &ins;
          if (ins.op == Op::StackCap && ins.a == alloca_v && !stackcap_ins) {
            stackcap_ins = &ins;
          }
        }
      }
      if (!alloca_ins) continue;
      const std::string base_name = fn.value_names[alloca_v];

      ValueId cap_v;
      if (!stackcap_ins) {
        // The bounds-elision optimization would have skipped this variable;
        // materialize the bounded capability it needs.
        cap_v = fn.new_value(base_name + ".cap", Type::Cap);
      } else {
        cap_v = stackcap_ins->result;
      }
      ValueId op_v = fn.new_value(base_name + ".wbr", Type::Cap);

      // Every use of the alloca and of the bounded capability moves to the
      // activated capability.
      std::map<ValueId, ValueId> repl{{alloca_v, op_v}};
      if (stackcap_ins) repl[cap_v] = op_v;
      rewrite_function(fn, repl);

      for (auto& blk : fn.blocks) {
        std::vector<Instr> rebuilt;
        rebuilt.reserve(blk.instrs.size() + 2);
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::Alloca && ins.result == alloca_v) {
            rebuilt.push_back(ins);
            if (!stackcap_ins) {
              Instr sc;
              sc.op = Op::StackCap;
              sc.result = cap_v;
              sc.type = Type::Cap;
              sc.a = alloca_v;
              sc.imm = ins.imm;
              sc.line = ins.line;
              rebuilt.push_back(sc);
              Instr ob;
              ob.op = Op::SetOpBounds;
              ob.result = op_v;
              ob.type = Type::Cap;
              ob.a = cap_v;
              ob.imm = 0;
              ob.line = ins.line;
              rebuilt.push_back(ob);
            }
          } else if (stackcap_ins && ins.op == Op::StackCap && ins.result == cap_v) {
            Instr fixed = ins;
            fixed.a = alloca_v;  // undo the global rewrite on its own operand
            rebuilt.push_back(fixed);
            Instr ob;
            ob.op = Op::SetOpBounds;
            ob.result = op_v;
            ob.type = Type::Cap;
            ob.a = cap_v;
            ob.imm = 0;
            ob.line = ins.line;
            rebuilt.push_back(ob);
          } else {
            rebuilt.push_back(ins);
          }
        }
        blk.instrs = std::move(rebuilt);
      }
    }
  }
  return out;
}

namespace {

// Values carrying conditional state: operation-bound activations plus
// everything a conditional capability can flow through.  Loads of
// capabilities and heap allocations count conservatively; their origin is
// not statically known.
std::set<ValueId> conditional_sources(const Function& fn) {
  std::set<ValueId> cond;
  for (ValueId p = 0; p < fn.params.size(); ++p) {
    if (fn.params[p].type == Type::Cap) cond.insert(p);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& blk : fn.blocks) {
      for (const auto& ins : blk.instrs) {
        if (ins.result == kNoValue || cond.count(ins.result)) continue;
        bool is_cond = false;
        switch (ins.op) {
          case Op::SetOpBounds:
            is_cond = true;
            break;
          case Op::Load:
            is_cond = ins.type == Type::Cap;
            break;
          case Op::Call:
            is_cond = ins.type == Type::Cap;
            break;
          case Op::Gep:
          case Op::Pin:
            is_cond = cond.count(ins.a) != 0;
            break;
          case Op::Phi:
            for (const auto& [v, b] : ins.incomings) {
              if (cond.count(v)) is_cond = true;
            }
            break;
          default:
            break;
        }
        if (is_cond) {
          cond.insert(ins.result);
          changed = true;
        }
      }
    }
  }
  return cond;
}

struct Linearizer {
  Function& fn;
  std::set<ValueId> cond;
  // Union-find over pin/reload chains back to one canonical capability.
  std::map<ValueId, ValueId> parent;
  // Memory locations (slot pointer values) holding each canonical value.
  std::map<ValueId, std::vector<ValueId>> slots;

  ValueId canon(ValueId v) {
    auto it = parent.find(v);
    if (it == parent.end()) return v;
    ValueId root = canon(it->second);
    parent[v] = root;
    return root;
  }
  void merge(ValueId child, ValueId root) { parent[child] = canon(root); }
  void bind_slot(ValueId value, ValueId slot) {
    auto& list = slots[canon(value)];
    for (ValueId s : list) {
      if (s == slot) return;
    }
    list.push_back(slot);
  }

  uint32_t def_block(ValueId v) const {
    for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
      for (const auto& ins : fn.blocks[b].instrs) {
        if (ins.result == v) return b;
      }
    }
    return 0;  // params
  }

  void demote_phis();
  void demote_cross_block();
  void clone_cross_block_geps();
  void pin_and_refresh();
};

// Conditional-capability phis become stores on each incoming edge plus a
// reload where the phi stood.
void Linearizer::demote_phis() {
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    Block& blk = fn.blocks[b];
    std::vector<Instr> head;
    for (size_t i = 0; i < blk.instrs.size() && blk.instrs[i].op == Op::Phi; ++i) {
      Instr& phi = blk.instrs[i];
      if (phi.type != Type::Cap || !cond.count(phi.result)) continue;

      ValueId slot_v = fn.new_value(fn.value_names[phi.result] + ".slot", Type::Cap);
      Instr slot;
      slot.op = Op::Alloca;
      slot.result = slot_v;
      slot.type = Type::Cap;
      slot.imm = 16;
      fn.blocks[0].instrs.insert(fn.blocks[0].instrs.begin(), slot);

      for (const auto& [v, pred] : phi.incomings) {
        Instr st;
        st.op = Op::Store;
        st.type = Type::Cap;
        st.a = v;
        st.b = slot_v;
        Block& pb = fn.blocks[pred];
        pb.instrs.insert(pb.instrs.end() - 1, st);
      }
      // The reload keeps the phi's value id, so uses stay valid.
      Instr reload;
      reload.op = Op::Load;
      reload.type = Type::Cap;
      reload.result = phi.result;
      reload.a = slot_v;
      merge(phi.result, phi.result);  // canonical stays itself
      bind_slot(phi.result, slot_v);
      phi = reload;  // replaces the phi in place (loads may follow phis)
    }
    (void)head;
  }
  // Loads that replaced phis must come after any remaining phis.
  for (auto& blk : fn.blocks) {
    std::stable_sort(blk.instrs.begin(),
                     blk.instrs.begin() + [&] {
                       size_t n = 0;
                       while (n < blk.instrs.size() &&
                              (blk.instrs[n].op == Op::Phi || (blk.instrs[n].op == Op::Load &&
                                                               blk.instrs[n].type == Type::Cap)))
                         ++n;
                       return n;
                     }(),
                     [](const Instr& x, const Instr& y) {
                       return (x.op == Op::Phi) > (y.op == Op::Phi);
                     });
  }
}

// Conditional capabilities used outside their defining block move through a
// dedicated stack slot: stored right after the definition, reloaded at the
// top of every using block.
void Linearizer::demote_cross_block() {
  struct Escape {
    ValueId value;
    uint32_t def_blk;
    std::set<uint32_t> use_blocks;
  };
  std::vector<Escape> escapes;
  for (ValueId v : cond) {
    // Gep results are re-derived instead of populated in memory.
    const Instr* def = nullptr;
    uint32_t defb = 0;
    bool is_param = v < fn.params.size();
    for (uint32_t b = 0; b < fn.blocks.size() && !def; ++b) {
      for (const auto& ins : fn.blocks[b].instrs) {
        if (ins.result == v) {
          def = &ins;
          defb = b;
          break;
        }
      }
    }
    if (def && def->op == Op::Gep) continue;
    std::set<uint32_t> uses;
    for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
      for (const auto& ins : fn.blocks[b].instrs) {
        if (ins.a == v || ins.b == v) uses.insert(b);
        for (ValueId a : ins.args) {
          if (a == v) uses.insert(b);
        }
      }
    }
    uses.erase(is_param ? 0 : defb);
    if (!uses.empty()) escapes.push_back({v, is_param ? 0 : defb, uses});
  }

  for (const auto& esc : escapes) {
    ValueId slot_v = fn.new_value(fn.value_names[esc.value] + ".slot", Type::Cap);
    Instr slot;
    slot.op = Op::Alloca;
    slot.result = slot_v;
    slot.type = Type::Cap;
    slot.imm = 16;
    fn.blocks[0].instrs.insert(fn.blocks[0].instrs.begin(), slot);
    bind_slot(esc.value, slot_v);

    // Store after the definition (or at entry for params).
    Block& db = fn.blocks[esc.def_blk];
    size_t pos = 0;
    if (esc.value >= fn.params.size()) {
      for (size_t i = 0; i < db.instrs.size(); ++i) {
        if (db.instrs[i].result == esc.value) {
          pos = i + 1;
          break;
        }
      }
    } else {
      // after the leading slot allocas of the entry block
      while (pos < db.instrs.size() && db.instrs[pos].op == Op::Alloca) ++pos;
    }
    Instr st;
    st.op = Op::Store;
    st.type = Type::Cap;
    st.a = esc.value;
    st.b = slot_v;
    db.instrs.insert(db.instrs.begin() + pos, st);

    // Reload at the head of each using block and rewrite that block's uses.
    for (uint32_t ub : esc.use_blocks) {
      Block& blk = fn.blocks[ub];
      ValueId reload_v =
          fn.new_value(fn.value_names[esc.value] + ".r" + std::to_string(ub), Type::Cap);
      cond.insert(reload_v);
      merge(reload_v, esc.value);
      std::map<ValueId, ValueId> repl{{esc.value, reload_v}};
      for (auto& ins : blk.instrs) {
        if (ins.op == Op::Phi) continue;  // edge uses belong to the predecessor
        rewrite_instr(ins, repl);
      }
      size_t at = 0;
      while (at < blk.instrs.size() && blk.instrs[at].op == Op::Phi) ++at;
      Instr reload;
      reload.op = Op::Load;
      reload.type = Type::Cap;
      reload.result = reload_v;
      reload.a = slot_v;
      blk.instrs.insert(blk.instrs.begin() + at, reload);
    }
  }
}

// A gep whose base is conditional is re-derived in every block that uses
// its result, so the result itself never needs a slot.
void Linearizer::clone_cross_block_geps() {
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
      for (size_t i = 0; i < fn.blocks[b].instrs.size(); ++i) {
        Instr gep = fn.blocks[b].instrs[i];
        if (gep.op != Op::Gep || !cond.count(gep.a)) continue;
        for (uint32_t ub = 0; ub < fn.blocks.size(); ++ub) {
          if (ub == b) continue;
          Block& blk = fn.blocks[ub];
          size_t first_use = blk.instrs.size();
          bool uses = false;
          for (size_t j = 0; j < blk.instrs.size(); ++j) {
            const Instr& ins = blk.instrs[j];
            if (ins.op == Op::Phi) continue;
            bool u = ins.a == gep.result || ins.b == gep.result;
            for (ValueId a : ins.args) u |= a == gep.result;
            if (u) {
              first_use = j;
              uses = true;
              break;
            }
          }
          if (!uses) continue;
          ValueId clone_v = fn.new_value(
              fn.value_names[gep.result] + ".g" + std::to_string(ub), Type::Cap);
          cond.insert(clone_v);
          Instr clone = gep;
          clone.result = clone_v;
          std::map<ValueId, ValueId> repl{{gep.result, clone_v}};
          for (size_t j = first_use; j < blk.instrs.size(); ++j) {
            if (blk.instrs[j].op != Op::Phi) rewrite_instr(blk.instrs[j], repl);
          }
          blk.instrs.insert(blk.instrs.begin() + first_use, clone);
          changed = true;
        }
        if (changed) break;
      }
      if (changed) break;
    }
  }
}

// Resolves a store address to the capability whose liveness matters: the
// gep input rather than the gep output.
ValueId store_root(const Function& fn, const DefMap& defs, ValueId addr) {
  ValueId v = addr;
  while (v != kNoValue && defs.def[v] && defs.def[v]->op == Op::Gep) {
    v = defs.def[v]->a;
  }
  return v;
}

void Linearizer::pin_and_refresh() {
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    Block& blk = fn.blocks[b];
    DefMap defs(fn);
    std::map<ValueId, ValueId> current;  // latest pinned version in this block
    std::set<ValueId> defined_here;      // values usable as refresh targets
    std::vector<Instr> rebuilt;
    rebuilt.reserve(blk.instrs.size());

    auto chase = [&](ValueId v) {
      auto it = current.find(v);
      while (it != current.end()) {
        v = it->second;
        it = current.find(v);
      }
      return v;
    };
    auto slot_usable = [&](ValueId s) {
      if (s < fn.params.size()) return true;
      if (defined_here.count(chase(s))) return true;
      const Instr* d = defs.def[s];
      // Entry-block slot allocas dominate everything.
      return d && d->op == Op::Alloca && def_block(s) == 0;
    };

    for (size_t i = 0; i < blk.instrs.size(); ++i) {
      Instr ins = blk.instrs[i];
      rewrite_instr(ins, current);

      if (ins.op == Op::Store) {
        ValueId root = store_root(fn, defs, ins.b);
        if (root != kNoValue && cond.count(canon(root))) {
          ValueId root_cur = chase(root);
          // Idempotence: reuse a pin emitted immediately before.
          bool already_pinned = !rebuilt.empty() && rebuilt.back().op == Op::Pin &&
                                rebuilt.back().result == root_cur;
          ValueId pinned = root_cur;
          if (!already_pinned) {
            pinned = fn.new_value(fn.value_names[canon(root)] + ".pin", Type::Cap);
            cond.insert(pinned);
            merge(pinned, root);
            Instr pin;
            pin.op = Op::Pin;
            pin.result = pinned;
            pin.type = Type::Cap;
            pin.a = root_cur;
            pin.line = ins.line;
            rebuilt.push_back(pin);
            current[root_cur] = pinned;
            defined_here.insert(pinned);
          }
          if (ins.b == root_cur) ins.b = pinned;  // direct store through the pin
          rebuilt.push_back(ins);
          if (ins.result != kNoValue) defined_here.insert(ins.result);

          // Capabilities that also live in memory are refreshed right after
          // the frontier-advancing store.
          for (ValueId s : slots[canon(root)]) {
            if (!slot_usable(s)) continue;
            const Instr* next = i + 1 < blk.instrs.size() ? &blk.instrs[i + 1] : nullptr;
            if (next && next->op == Op::Store && next->type == Type::Cap &&
                next->is_volatile && next->b == s) {
              continue;  // already linearized
            }
            Instr refresh;
            refresh.op = Op::Store;
            refresh.type = Type::Cap;
            refresh.is_volatile = true;
            refresh.a = pinned;
            refresh.b = chase(s);
            refresh.line = ins.line;
            rebuilt.push_back(refresh);
          }
          continue;
        }
      }

      // Record memory locations of conditional capabilities as they appear.
      if (ins.op == Op::Store && ins.type == Type::Cap && cond.count(canon(ins.a))) {
        bind_slot(ins.a, ins.b);
      }
      if (ins.op == Op::Load && ins.type == Type::Cap && ins.result != kNoValue) {
        bind_slot(ins.result, ins.a);
      }
      if (ins.result != kNoValue) defined_here.insert(ins.result);
      rebuilt.push_back(ins);
    }
    blk.instrs = std::move(rebuilt);
  }
}

}  // namespace

Module pass_store_linearize(const Module& module) {
  Module out = module;
  for (auto& fn : out.functions) {
    Linearizer lin{fn, conditional_sources(fn), {}, {}};
    if (lin.cond.empty()) continue;  // identity off-domain
    lin.demote_phis();
    lin.demote_cross_block();
    lin.clone_cross_block_geps();
    // Memory bindings that exist before any pinning: explicit capability
    // stores and loads anywhere in the function.
    {
      DefMap defs(fn);
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::Store && ins.type == Type::Cap && lin.cond.count(lin.canon(ins.a))) {
            lin.bind_slot(ins.a, ins.b);
          }
          if (ins.op == Op::Load && ins.type == Type::Cap && ins.result != kNoValue &&
              lin.cond.count(ins.result)) {
            lin.bind_slot(ins.result, ins.a);
          }
        }
      }
    }
    lin.pin_and_refresh();
  }
  return out;
}

}  // namespace monvm::mir
