#include <algorithm>
#include <set>
#include <vector>

#include "monvm/mir.hpp"

namespace monvm::mir {

namespace {

struct Cfg {
  std::vector<std::vector<uint32_t>> succs;
  std::vector<std::vector<uint32_t>> preds;
};

Cfg build_cfg(const Function& fn) {
  Cfg cfg;
  cfg.succs.resize(fn.blocks.size());
  cfg.preds.resize(fn.blocks.size());
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    if (fn.blocks[b].instrs.empty()) continue;
    const Instr& t = fn.blocks[b].instrs.back();
    if (t.op == Op::Br) {
      cfg.succs[b].push_back(t.target);
    } else if (t.op == Op::CondBr) {
      cfg.succs[b].push_back(t.target);
      cfg.succs[b].push_back(t.target2);
    }
  }
  for (uint32_t b = 0; b < cfg.succs.size(); ++b) {
    for (uint32_t s : cfg.succs[b]) cfg.preds[s].push_back(b);
  }
  return cfg;
}

// Iterative dominator sets; small functions make the quadratic form fine.
std::vector<std::set<uint32_t>> dominators(const Function& fn, const Cfg& cfg) {
  const size_t n = fn.blocks.size();
  std::set<uint32_t> all;
  for (uint32_t b = 0; b < n; ++b) all.insert(b);
  std::vector<std::set<uint32_t>> dom(n, all);
  dom[0] = {0};
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 1; b < n; ++b) {
      std::set<uint32_t> next = all;
      if (cfg.preds[b].empty()) {
        next = {b};  // unreachable; keep it self-dominated
      } else {
        for (uint32_t p : cfg.preds[b]) {
          std::set<uint32_t> inter;
          std::set_intersection(next.begin(), next.end(), dom[p].begin(), dom[p].end(),
                                std::inserter(inter, inter.begin()));
          next = std::move(inter);
        }
        next.insert(b);
      }
      if (next != dom[b]) {
        dom[b] = std::move(next);
        changed = true;
      }
    }
  }
  return dom;
}

struct DefSite {
  uint32_t block = 0;
  size_t index = 0;  // instruction index within block; params use block 0, index 0
  bool is_param = false;
};

struct Checker {
  const Module& mod;
  const Function& fn;
  Cfg cfg;
  std::vector<std::set<uint32_t>> dom;
  std::vector<DefSite> defs;  // by value id
  std::vector<bool> defined;

  std::optional<VerifyError> fail(const std::string& m) const {
    return VerifyError{fn.name, m};
  }

  bool dominates(uint32_t a, uint32_t b) const { return dom[b].count(a) != 0; }

  std::optional<VerifyError> check_use(ValueId v, uint32_t block, size_t index,
                                       const Instr& ins) const {
    if (v == kNoValue || v >= fn.value_names.size() || !defined[v]) {
      return fail("use of undefined value (line " + std::to_string(ins.line) + ")");
    }
    const DefSite& d = defs[v];
    if (d.is_param) return std::nullopt;
    if (d.block == block) {
      if (d.index >= index) {
        return fail("use of %" + fn.value_names[v] + " before its definition (line " +
                    std::to_string(ins.line) + ")");
      }
      return std::nullopt;
    }
    if (!dominates(d.block, block)) {
      return fail("use of %" + fn.value_names[v] + " not dominated by its definition (line " +
                  std::to_string(ins.line) + ")");
    }
    return std::nullopt;
  }

  Type type_of(ValueId v) const { return fn.value_types[v]; }
};

std::optional<VerifyError> check_call(const Checker& ck, const Instr& ins) {
  auto fail = [&](const std::string& m) { return ck.fail(m); };
  const auto arity_err = fail("call @" + ins.callee + ": wrong argument count (line " +
                              std::to_string(ins.line) + ")");
  if (is_builtin(ins.callee)) {
    if (ins.callee == "malloc" || ins.callee == "malloc_zeroed") {
      if (ins.args.size() != 1 || ck.type_of(ins.args[0]) != Type::Int) return arity_err;
    } else if (ins.callee == "free") {
      if (ins.args.size() != 1 || ck.type_of(ins.args[0]) != Type::Cap) return arity_err;
    } else if (ins.callee == "print_int" || ins.callee == "exit") {
      if (ins.args.size() != 1 || ck.type_of(ins.args[0]) != Type::Int) return arity_err;
    }
    return std::nullopt;
  }
  const Function* callee = ck.mod.find(ins.callee);
  if (!callee) {
    return fail("call to unknown function @" + ins.callee + " (line " +
                std::to_string(ins.line) + ")");
  }
  if (ins.args.size() != callee->params.size()) return arity_err;
  for (size_t i = 0; i < ins.args.size(); ++i) {
    if (ck.type_of(ins.args[i]) != callee->params[i].type) {
      return fail("call @" + ins.callee + ": argument " + std::to_string(i) +
                  " type mismatch (line " + std::to_string(ins.line) + ")");
    }
  }
  if (ins.result != kNoValue) {
    if (!callee->has_ret) {
      return fail("call @" + ins.callee + ": using result of void function (line " +
                  std::to_string(ins.line) + ")");
    }
    if (ck.type_of(ins.result) != callee->ret_type) {
      return fail("call @" + ins.callee + ": result type mismatch (line " +
                  std::to_string(ins.line) + ")");
    }
  }
  return std::nullopt;
}

std::optional<VerifyError> verify_function(const Module& mod, const Function& fn) {
  Checker ck{mod, fn, build_cfg(fn), {}, {}, {}};
  auto fail = [&](const std::string& m) { return ck.fail(m); };

  if (fn.blocks.empty()) return fail("no blocks");
  ck.dom = dominators(fn, ck.cfg);
  ck.defs.resize(fn.value_names.size());
  ck.defined.assign(fn.value_names.size(), false);
  for (ValueId p = 0; p < fn.params.size(); ++p) {
    ck.defined[p] = true;
    ck.defs[p] = DefSite{0, 0, true};
  }

  // Definition sites; single definition per value.
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    const Block& blk = fn.blocks[b];
    if (blk.instrs.empty()) return fail("block " + blk.name + " is empty");
    for (size_t i = 0; i < blk.instrs.size(); ++i) {
      const Instr& ins = blk.instrs[i];
      if (ins.is_terminator() != (i + 1 == blk.instrs.size())) {
        return fail("block " + blk.name + ": terminator placement (line " +
                    std::to_string(ins.line) + ")");
      }
      if (ins.op == Op::Phi && i != 0 && blk.instrs[i - 1].op != Op::Phi) {
        return fail("block " + blk.name + ": phi not at block head (line " +
                    std::to_string(ins.line) + ")");
      }
      if (ins.result != kNoValue) {
        if (ins.result >= fn.value_names.size()) return fail("result id out of range");
        if (ck.defined[ins.result]) {
          return fail("%" + fn.value_names[ins.result] + " defined twice");
        }
        ck.defined[ins.result] = true;
        ck.defs[ins.result] = DefSite{b, i, false};
      }
      if ((ins.op == Op::Br || ins.op == Op::CondBr)) {
        if (ins.target >= fn.blocks.size() ||
            (ins.op == Op::CondBr && ins.target2 >= fn.blocks.size())) {
          return fail("branch target out of range (line " + std::to_string(ins.line) + ")");
        }
      }
    }
  }

  // Uses, dominance and types.
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    const Block& blk = fn.blocks[b];
    for (size_t i = 0; i < blk.instrs.size(); ++i) {
      const Instr& ins = blk.instrs[i];
      auto use = [&](ValueId v) { return ck.check_use(v, b, i, ins); };
      auto want = [&](ValueId v, Type t, const char* what) -> std::optional<VerifyError> {
        if (ck.type_of(v) != t) {
          return fail(std::string(what) + " must be " + (t == Type::Cap ? "cap" : "int") +
                      " (line " + std::to_string(ins.line) + ")");
        }
        return std::nullopt;
      };
      std::optional<VerifyError> e;
      switch (ins.op) {
        case Op::Alloca:
          break;
        case Op::StackCap:
          if ((e = use(ins.a))) return e;
          if ((e = want(ins.a, Type::Cap, "stackcap operand"))) return e;
          break;
        case Op::SetOpBounds:
        case Op::Pin:
          if ((e = use(ins.a))) return e;
          if ((e = want(ins.a, Type::Cap, "capability operand"))) return e;
          break;
        case Op::Load:
          if ((e = use(ins.a))) return e;
          if ((e = want(ins.a, Type::Cap, "load address"))) return e;
          break;
        case Op::Store:
          if ((e = use(ins.a))) return e;
          if ((e = use(ins.b))) return e;
          if ((e = want(ins.b, Type::Cap, "store address"))) return e;
          if (ck.type_of(ins.a) != ins.type) {
            return fail("store operand/width mismatch (line " + std::to_string(ins.line) + ")");
          }
          break;
        case Op::Gep:
          if ((e = use(ins.a))) return e;
          if ((e = use(ins.b))) return e;
          if ((e = want(ins.a, Type::Cap, "gep base"))) return e;
          if ((e = want(ins.b, Type::Int, "gep offset"))) return e;
          break;
        case Op::BinOp:
          if ((e = use(ins.a))) return e;
          if ((e = use(ins.b))) return e;
          if ((e = want(ins.a, Type::Int, "operand"))) return e;
          if ((e = want(ins.b, Type::Int, "operand"))) return e;
          break;
        case Op::Const:
          break;
        case Op::Call:
          for (ValueId v : ins.args) {
            if ((e = use(v))) return e;
          }
          if ((e = check_call(ck, ins))) return e;
          break;
        case Op::Phi: {
          if (ins.incomings.empty()) return fail("phi with no incomings");
          if (ins.incomings.size() != ck.cfg.preds[b].size()) {
            return fail("phi incoming count does not match predecessors (line " +
                        std::to_string(ins.line) + ")");
          }
          for (const auto& [v, pred] : ins.incomings) {
            if (std::find(ck.cfg.preds[b].begin(), ck.cfg.preds[b].end(), pred) ==
                ck.cfg.preds[b].end()) {
              return fail("phi incoming from non-predecessor (line " +
                          std::to_string(ins.line) + ")");
            }
            if (v == kNoValue || v >= fn.value_names.size() || !ck.defined[v]) {
              return fail("phi uses undefined value (line " + std::to_string(ins.line) + ")");
            }
            const DefSite& d = ck.defs[v];
            if (!d.is_param && !(d.block == pred || ck.dominates(d.block, pred))) {
              return fail("phi incoming %" + fn.value_names[v] +
                          " does not dominate edge (line " + std::to_string(ins.line) + ")");
            }
            if (ck.type_of(v) != ins.type) {
              return fail("phi operand type mismatch (line " + std::to_string(ins.line) + ")");
            }
          }
          break;
        }
        case Op::Br:
          break;
        case Op::CondBr:
          if ((e = use(ins.a))) return e;
          if ((e = want(ins.a, Type::Int, "branch condition"))) return e;
          break;
        case Op::Ret:
          if (fn.has_ret) {
            if (ins.a == kNoValue) {
              return fail("ret without value in value-returning function (line " +
                          std::to_string(ins.line) + ")");
            }
            if ((e = use(ins.a))) return e;
            if ((e = want(ins.a, fn.ret_type, "return value"))) return e;
          } else if (ins.a != kNoValue) {
            return fail("ret with value in void function (line " +
                        std::to_string(ins.line) + ")");
          }
          break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

Expected<bool, VerifyError> verify(const Module& module) {
  for (const auto& fn : module.functions) {
    for (const auto& other : module.functions) {
      if (&fn != &other && fn.name == other.name) {
        return VerifyError{fn.name, "duplicate function name"};
      }
    }
    if (auto e = verify_function(module, fn)) return *e;
  }
  return true;
}

}  // namespace monvm::mir
