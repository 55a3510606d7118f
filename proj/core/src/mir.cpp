#include "monvm/mir.hpp"

#include <charconv>
#include <map>
#include <optional>
#include <sstream>

namespace monvm::mir {

bool is_builtin(const std::string& callee) {
  return callee == "malloc" || callee == "malloc_zeroed" || callee == "free" ||
         callee == "print_int" || callee == "exit";
}

namespace {

struct Cursor {
  const std::string& s;
  size_t i = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool eat(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  bool eat_word(const char* w) {
    skip_ws();
    size_t n = std::string(w).size();
    if (s.compare(i, n, w) == 0 &&
        (i + n == s.size() || !(isalnum(s[i + n]) || s[i + n] == '_'))) {
      i += n;
      return true;
    }
    return false;
  }
  std::optional<std::string> ident() {
    skip_ws();
    size_t b = i;
    while (i < s.size() && (isalnum(s[i]) || s[i] == '_' || s[i] == '.')) ++i;
    if (i == b) return std::nullopt;
    return s.substr(b, i - b);
  }
  std::optional<std::string> value_name() {
    skip_ws();
    if (i >= s.size() || s[i] != '%') return std::nullopt;
    ++i;
    return ident();
  }
  std::optional<int64_t> integer() {
    skip_ws();
    size_t b = i;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
    if (i + 1 < s.size() && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
      i += 2;
      size_t d = i;
      while (i < s.size() && isxdigit(s[i])) ++i;
      if (i == d) return std::nullopt;
      uint64_t v = 0;
      std::from_chars(s.data() + d, s.data() + i, v, 16);
      return s[b] == '-' ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
    }
    size_t d = i;
    while (i < s.size() && isdigit(s[i])) ++i;
    if (i == d) {
      i = b;
      return std::nullopt;
    }
    int64_t v = 0;
    std::from_chars(s.data() + b, s.data() + i, v);
    return v;
  }
  bool at_end() {
    skip_ws();
    return i >= s.size();
  }
};

struct FunctionBuilder {
  Function fn;
  std::map<std::string, ValueId> names;
  std::map<std::string, uint32_t> block_ids;
  struct PendingTarget {
    uint32_t block;
    size_t instr;
    bool second;
    std::string label;
    int line;
  };
  std::vector<PendingTarget> pending_targets;
  struct PendingIncoming {
    uint32_t block;
    size_t instr;
    size_t slot;
    std::string label;
    int line;
  };
  std::vector<PendingIncoming> pending_incomings;
  // Phi operands and forward branch references may name values defined
  // later; resolved at function end.
  struct PendingValue {
    uint32_t block;
    size_t instr;
    int operand_slot;  // 0 = incoming index into `incomings`
    size_t index;
    std::string name;
    int line;
  };
  std::vector<PendingValue> pending_values;
};

std::optional<Type> parse_type(Cursor& c) {
  if (c.eat_word("int")) return Type::Int;
  if (c.eat_word("cap")) return Type::Cap;
  return std::nullopt;
}

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::Add: return "add";
    case BinKind::Sub: return "sub";
    case BinKind::Mul: return "mul";
    case BinKind::And: return "and";
    case BinKind::Or: return "or";
    case BinKind::Xor: return "xor";
    case BinKind::Slt: return "slt";
  }
  return "?";
}

std::optional<BinKind> bin_kind(const std::string& w) {
  if (w == "add") return BinKind::Add;
  if (w == "sub") return BinKind::Sub;
  if (w == "mul") return BinKind::Mul;
  if (w == "and") return BinKind::And;
  if (w == "or") return BinKind::Or;
  if (w == "xor") return BinKind::Xor;
  if (w == "slt") return BinKind::Slt;
  return std::nullopt;
}

}  // namespace

Expected<Module, ParseError> parse_mir(const std::string& source) {
  Module mod;
  std::optional<FunctionBuilder> fb;
  uint32_t cur_block = 0;

  auto err = [](int line, std::string m) { return ParseError{line, std::move(m)}; };

  auto lookup_value = [&](const std::string& name) -> std::optional<ValueId> {
    auto it = fb->names.find(name);
    if (it == fb->names.end()) return std::nullopt;
    return it->second;
  };

  auto finish_function = [&](int line) -> std::optional<ParseError> {
    for (auto& p : fb->pending_targets) {
      auto it = fb->block_ids.find(p.label);
      if (it == fb->block_ids.end())
        return err(p.line, "unknown block '" + p.label + "'");
      Instr& ins = fb->fn.blocks[p.block].instrs[p.instr];
      (p.second ? ins.target2 : ins.target) = it->second;
    }
    for (auto& p : fb->pending_incomings) {
      auto it = fb->block_ids.find(p.label);
      if (it == fb->block_ids.end())
        return err(p.line, "unknown block '" + p.label + "'");
      fb->fn.blocks[p.block].instrs[p.instr].incomings[p.slot].second = it->second;
    }
    for (auto& p : fb->pending_values) {
      auto v = lookup_value(p.name);
      if (!v) return err(p.line, "unknown value '%" + p.name + "'");
      fb->fn.blocks[p.block].instrs[p.instr].incomings[p.index].first = *v;
    }
    if (fb->fn.blocks.empty()) return err(line, "function with no blocks");
    mod.functions.push_back(std::move(fb->fn));
    fb.reset();
    return std::nullopt;
  };

  std::istringstream in(source);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (size_t cpos = line.find(';'); cpos != std::string::npos) line = line.substr(0, cpos);
    Cursor c{line};
    if (c.at_end()) continue;

    if (c.eat_word("func")) {
      if (fb) return err(line_no, "nested function");
      if (!c.eat('@')) return err(line_no, "expected @name");
      auto name = c.ident();
      if (!name) return err(line_no, "expected function name");
      fb.emplace();
      fb->fn.name = *name;
      if (!c.eat('(')) return err(line_no, "expected (");
      if (!c.eat(')')) {
        while (true) {
          auto pname = c.value_name();
          if (!pname) return err(line_no, "expected %param");
          auto ptype = parse_type(c);
          if (!ptype) return err(line_no, "expected param type (int|cap)");
          if (fb->names.count(*pname)) return err(line_no, "duplicate param");
          Param p{*pname, *ptype};
          fb->fn.params.push_back(p);
          fb->names[*pname] = fb->fn.new_value(*pname, *ptype);
          if (c.eat(')')) break;
          if (!c.eat(',')) return err(line_no, "expected , or )");
        }
      }
      if (c.eat('-')) {
        if (!c.eat('>')) return err(line_no, "expected ->");
        auto rt = parse_type(c);
        if (!rt) return err(line_no, "expected return type");
        fb->fn.has_ret = true;
        fb->fn.ret_type = *rt;
      }
      if (c.eat('[')) {
        if (!c.eat_word("wbr") || !c.eat(']')) return err(line_no, "expected [wbr]");
        fb->fn.wbr_function = true;
      }
      if (!c.eat('{')) return err(line_no, "expected {");
      continue;
    }

    if (!fb) return err(line_no, "statement outside function");

    if (c.eat('}')) {
      if (auto e = finish_function(line_no)) return *e;
      continue;
    }

    if (c.eat_word("block")) {
      auto bname = c.ident();
      if (!bname || !c.eat(':')) return err(line_no, "expected block name:");
      if (fb->block_ids.count(*bname)) return err(line_no, "duplicate block");
      fb->block_ids[*bname] = static_cast<uint32_t>(fb->fn.blocks.size());
      fb->fn.blocks.push_back(Block{*bname, {}});
      cur_block = static_cast<uint32_t>(fb->fn.blocks.size() - 1);
      continue;
    }

    if (fb->fn.blocks.empty()) return err(line_no, "instruction before first block");

    Instr ins;
    ins.line = line_no;
    auto define = [&](const std::string& name, Type t) -> std::optional<ParseError> {
      if (fb->names.count(name)) return err(line_no, "redefinition of %" + name);
      ins.result = fb->fn.new_value(name, t);
      ins.type = t;
      fb->names[name] = ins.result;
      return std::nullopt;
    };
    auto operand = [&](const std::string& what) -> Expected<ValueId, ParseError> {
      auto n = c.value_name();
      if (!n) return err(line_no, "expected value for " + what);
      auto v = lookup_value(*n);
      if (!v) return err(line_no, "use of undefined value '%" + *n + "'");
      return *v;
    };

    if (c.eat_word("store")) {
      ins.op = Op::Store;
      if (c.eat_word("volatile")) ins.is_volatile = true;
      bool cap = c.eat_word("cap");
      auto v = operand("store value");
      if (!v.ok()) return v.error();
      if (!c.eat(',')) return err(line_no, "expected ,");
      auto p = operand("store address");
      if (!p.ok()) return p.error();
      ins.a = v.value();
      ins.b = p.value();
      ins.type = cap ? Type::Cap : Type::Int;  // operand width
      if (!c.at_end()) return err(line_no, "trailing characters");
      fb->fn.blocks[cur_block].instrs.push_back(ins);
      continue;
    }
    if (c.eat_word("br")) {
      auto n = c.value_name();
      if (n) {
        auto v = lookup_value(*n);
        if (!v) return err(line_no, "use of undefined value '%" + *n + "'");
        ins.op = Op::CondBr;
        ins.a = *v;
        if (!c.eat(',')) return err(line_no, "expected ,");
        auto t1 = c.ident();
        if (!t1 || !c.eat(',')) return err(line_no, "expected then, else blocks");
        auto t2 = c.ident();
        if (!t2) return err(line_no, "expected else block");
        fb->pending_targets.push_back(
            {cur_block, fb->fn.blocks[cur_block].instrs.size(), false, *t1, line_no});
        fb->pending_targets.push_back(
            {cur_block, fb->fn.blocks[cur_block].instrs.size(), true, *t2, line_no});
      } else {
        ins.op = Op::Br;
        auto t = c.ident();
        if (!t) return err(line_no, "expected block label");
        fb->pending_targets.push_back(
            {cur_block, fb->fn.blocks[cur_block].instrs.size(), false, *t, line_no});
      }
      if (!c.at_end()) return err(line_no, "trailing characters");
      fb->fn.blocks[cur_block].instrs.push_back(ins);
      continue;
    }
    if (c.eat_word("ret")) {
      ins.op = Op::Ret;
      if (!c.at_end()) {
        auto v = operand("return value");
        if (!v.ok()) return v.error();
        ins.a = v.value();
      }
      if (!c.at_end()) return err(line_no, "trailing characters");
      fb->fn.blocks[cur_block].instrs.push_back(ins);
      continue;
    }
    if (c.eat_word("call")) {
      ins.op = Op::Call;
      if (!c.eat('@')) return err(line_no, "expected @callee");
      auto callee = c.ident();
      if (!callee) return err(line_no, "expected callee name");
      ins.callee = *callee;
      if (!c.eat('(')) return err(line_no, "expected (");
      if (!c.eat(')')) {
        while (true) {
          auto v = operand("call argument");
          if (!v.ok()) return v.error();
          ins.args.push_back(v.value());
          if (c.eat(')')) break;
          if (!c.eat(',')) return err(line_no, "expected , or )");
        }
      }
      if (!c.at_end()) return err(line_no, "trailing characters");
      fb->fn.blocks[cur_block].instrs.push_back(ins);
      continue;
    }

    // Everything else defines a value: `%name = op ...`
    auto res_name = c.value_name();
    if (!res_name || !c.eat('=')) return err(line_no, "expected instruction");

    if (c.eat_word("alloca")) {
      ins.op = Op::Alloca;
      auto n = c.integer();
      if (!n || *n < 0) return err(line_no, "expected allocation size");
      ins.imm = *n;
      if (c.eat('[')) {
        if (!c.eat_word("wbr") || !c.eat(']')) return err(line_no, "expected [wbr]");
        ins.wbr_annotated = true;
      }
      if (auto e = define(*res_name, Type::Cap)) return *e;
    } else if (c.eat_word("stackcap")) {
      ins.op = Op::StackCap;
      auto v = operand("alloca");
      if (!v.ok()) return v.error();
      if (!c.eat(',')) return err(line_no, "expected ,");
      auto n = c.integer();
      if (!n || *n < 0) return err(line_no, "expected size");
      ins.a = v.value();
      ins.imm = *n;
      if (auto e = define(*res_name, Type::Cap)) return *e;
    } else if (c.eat_word("setopbounds")) {
      ins.op = Op::SetOpBounds;
      auto v = operand("capability");
      if (!v.ok()) return v.error();
      if (!c.eat(',')) return err(line_no, "expected ,");
      auto n = c.integer();
      if (!n || *n < 0) return err(line_no, "expected length");
      ins.a = v.value();
      ins.imm = *n;
      if (auto e = define(*res_name, Type::Cap)) return *e;
    } else if (c.eat_word("load")) {
      ins.op = Op::Load;
      if (c.eat_word("volatile")) ins.is_volatile = true;
      bool cap = c.eat_word("cap");
      auto v = operand("address");
      if (!v.ok()) return v.error();
      ins.a = v.value();
      if (auto e = define(*res_name, cap ? Type::Cap : Type::Int)) return *e;
    } else if (c.eat_word("gep")) {
      ins.op = Op::Gep;
      auto v = operand("base");
      if (!v.ok()) return v.error();
      if (!c.eat(',')) return err(line_no, "expected ,");
      auto idx = operand("offset");
      if (!idx.ok()) return idx.error();
      ins.a = v.value();
      ins.b = idx.value();
      if (auto e = define(*res_name, Type::Cap)) return *e;
    } else if (c.eat_word("pin")) {
      ins.op = Op::Pin;
      auto v = operand("capability");
      if (!v.ok()) return v.error();
      ins.a = v.value();
      if (auto e = define(*res_name, Type::Cap)) return *e;
    } else if (c.eat_word("const")) {
      ins.op = Op::Const;
      auto n = c.integer();
      if (!n) return err(line_no, "expected integer literal");
      ins.imm = *n;
      if (auto e = define(*res_name, Type::Int)) return *e;
    } else if (c.eat_word("call")) {
      ins.op = Op::Call;
      if (!c.eat('@')) return err(line_no, "expected @callee");
      auto callee = c.ident();
      if (!callee) return err(line_no, "expected callee name");
      ins.callee = *callee;
      if (!c.eat('(')) return err(line_no, "expected (");
      if (!c.eat(')')) {
        while (true) {
          auto v = operand("call argument");
          if (!v.ok()) return v.error();
          ins.args.push_back(v.value());
          if (c.eat(')')) break;
          if (!c.eat(',')) return err(line_no, "expected , or )");
        }
      }
      Type rt = Type::Int;
      if (ins.callee == "malloc" || ins.callee == "malloc_zeroed") rt = Type::Cap;
      if (auto e = define(*res_name, rt)) return *e;
      // User-function return types are reconciled during verification.
    } else if (c.eat_word("phi")) {
      ins.op = Op::Phi;
      while (true) {
        if (!c.eat('[')) return err(line_no, "expected [value, block]");
        auto n = c.value_name();
        if (!n) return err(line_no, "expected value");
        if (!c.eat(',')) return err(line_no, "expected ,");
        auto blk = c.ident();
        if (!blk || !c.eat(']')) return err(line_no, "expected block]");
        // Defer both value and block resolution: incomings may reference
        // later definitions.
        ins.incomings.emplace_back(kNoValue, 0u);
        fb->pending_values.push_back({cur_block, fb->fn.blocks[cur_block].instrs.size(),
                                      0, ins.incomings.size() - 1, *n, line_no});
        fb->pending_incomings.push_back({cur_block,
                                         fb->fn.blocks[cur_block].instrs.size(),
                                         ins.incomings.size() - 1, *blk, line_no});
        if (!c.eat(',')) break;
      }
      // Type is fixed after value resolution in verify; default to the type
      // of nothing specific here.
      if (auto e = define(*res_name, Type::Int)) return *e;
    } else {
      auto w = c.ident();
      if (!w) return err(line_no, "expected opcode");
      auto bk = bin_kind(*w);
      if (!bk) return err(line_no, "unknown opcode '" + *w + "'");
      ins.op = Op::BinOp;
      ins.bin = *bk;
      auto x = operand("lhs");
      if (!x.ok()) return x.error();
      if (!c.eat(',')) return err(line_no, "expected ,");
      auto y = operand("rhs");
      if (!y.ok()) return y.error();
      ins.a = x.value();
      ins.b = y.value();
      if (auto e = define(*res_name, Type::Int)) return *e;
    }
    if (!c.at_end()) return err(line_no, "trailing characters");
    fb->fn.blocks[cur_block].instrs.push_back(ins);
  }
  if (fb) return err(line_no, "unterminated function");

  // Call results take their callee's return type; phi results follow their
  // operands (iterated for phi-of-phi chains).
  for (auto& fn : mod.functions) {
    for (auto& blk : fn.blocks) {
      for (auto& ins : blk.instrs) {
        if (ins.op == Op::Call && ins.result != kNoValue && !is_builtin(ins.callee)) {
          if (const Function* callee = mod.find(ins.callee); callee && callee->has_ret) {
            ins.type = callee->ret_type;
            fn.value_types[ins.result] = ins.type;
          }
        }
      }
    }
  }
  for (int pass = 0; pass < 4; ++pass) {
    for (auto& fn : mod.functions) {
      for (auto& blk : fn.blocks) {
        for (auto& ins : blk.instrs) {
          if (ins.op == Op::Phi && !ins.incomings.empty()) {
            ins.type = fn.value_types[ins.incomings[0].first];
            fn.value_types[ins.result] = ins.type;
          }
        }
      }
    }
  }

  auto verified = verify(mod);
  if (!verified.ok()) {
    return ParseError{0, "in @" + verified.error().function + ": " +
                             verified.error().message};
  }
  return mod;
}

std::string to_text(const Function& fn) {
  std::ostringstream os;
  auto vname = [&](ValueId v) { return "%" + fn.value_names[v]; };
  os << "func @" << fn.name << "(";
  for (size_t i = 0; i < fn.params.size(); ++i) {
    if (i) os << ", ";
    os << "%" << fn.params[i].name << " "
       << (fn.params[i].type == Type::Cap ? "cap" : "int");
  }
  os << ")";
  if (fn.has_ret) os << " -> " << (fn.ret_type == Type::Cap ? "cap" : "int");
  if (fn.wbr_function) os << " [wbr]";
  os << " {\n";
  for (uint32_t b = 0; b < fn.blocks.size(); ++b) {
    const Block& blk = fn.blocks[b];
    os << "block " << blk.name << ":\n";
    for (const Instr& ins : blk.instrs) {
      os << "  ";
      switch (ins.op) {
        case Op::Alloca:
          os << vname(ins.result) << " = alloca " << ins.imm;
          if (ins.wbr_annotated) os << " [wbr]";
          break;
        case Op::StackCap:
          os << vname(ins.result) << " = stackcap " << vname(ins.a) << ", " << ins.imm;
          break;
        case Op::SetOpBounds:
          os << vname(ins.result) << " = setopbounds " << vname(ins.a) << ", " << ins.imm;
          break;
        case Op::Load:
          os << vname(ins.result) << " = load ";
          if (ins.is_volatile) os << "volatile ";
          if (ins.type == Type::Cap) os << "cap ";
          os << vname(ins.a);
          break;
        case Op::Store:
          os << "store ";
          if (ins.is_volatile) os << "volatile ";
          if (ins.type == Type::Cap) os << "cap ";
          os << vname(ins.a) << ", " << vname(ins.b);
          break;
        case Op::Gep:
          os << vname(ins.result) << " = gep " << vname(ins.a) << ", " << vname(ins.b);
          break;
        case Op::Pin:
          os << vname(ins.result) << " = pin " << vname(ins.a);
          break;
        case Op::BinOp:
          os << vname(ins.result) << " = " << bin_name(ins.bin) << " " << vname(ins.a)
             << ", " << vname(ins.b);
          break;
        case Op::Const:
          os << vname(ins.result) << " = const " << ins.imm;
          break;
        case Op::Call:
          if (ins.result != kNoValue) os << vname(ins.result) << " = ";
          os << "call @" << ins.callee << "(";
          for (size_t i = 0; i < ins.args.size(); ++i) {
            if (i) os << ", ";
            os << vname(ins.args[i]);
          }
          os << ")";
          break;
        case Op::Phi:
          os << vname(ins.result) << " = phi ";
          for (size_t i = 0; i < ins.incomings.size(); ++i) {
            if (i) os << ", ";
            os << "[" << vname(ins.incomings[i].first) << ", "
               << fn.blocks[ins.incomings[i].second].name << "]";
          }
          break;
        case Op::Br:
          os << "br " << fn.blocks[ins.target].name;
          break;
        case Op::CondBr:
          os << "br " << vname(ins.a) << ", " << fn.blocks[ins.target].name << ", "
             << fn.blocks[ins.target2].name;
          break;
        case Op::Ret:
          os << "ret";
          if (ins.a != kNoValue) os << " " << vname(ins.a);
          break;
      }
      os << "\n";
    }
  }
  os << "}\n";
  return os.str();
}

std::string to_text(const Module& module) {
  std::string out;
  for (const auto& fn : module.functions) {
    out += to_text(fn);
    out += "\n";
  }
  return out;
}

}  // namespace monvm::mir
