#include "monvm/assembler.hpp"

#include <cctype>
#include <charconv>
#include <optional>
#include <sstream>

namespace monvm {

CounterClass counter_class(Opcode op) {
  switch (op) {
    case Opcode::Li:
    case Opcode::Mv:
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
    case Opcode::Slt:
    case Opcode::Addi:
      return CounterClass::Integer;
    case Opcode::Beq:
    case Opcode::Bne:
    case Opcode::Blt:
    case Opcode::Bge:
    case Opcode::Jal:
    case Opcode::Jalr:
    case Opcode::Halt:
      return CounterClass::Branch;
    case Opcode::Load:
    case Opcode::CLoadCap:
      return CounterClass::Load;
    case Opcode::Store:
    case Opcode::CStoreCap:
      return CounterClass::Store;
    case Opcode::ECall:
      return CounterClass::Runtime;
    default:
      return CounterClass::Cap;
  }
}

namespace {

std::vector<std::string> tokenize_operands(const std::string& rest) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : rest) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& t : out) {
    size_t b = t.find_first_not_of(" \t");
    size_t e = t.find_last_not_of(" \t");
    t = b == std::string::npos ? "" : t.substr(b, e - b + 1);
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

std::optional<uint8_t> parse_reg(const std::string& t) {
  if (t.size() < 2 || t[0] != 'c') return std::nullopt;
  unsigned v = 0;
  auto [p, ec] = std::from_chars(t.data() + 1, t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
  if (v >= 72) return std::nullopt;
  return static_cast<uint8_t>(v);
}

std::optional<int64_t> parse_imm(const std::string& t) {
  if (t.empty()) return std::nullopt;
  size_t i = 0;
  bool neg = false;
  if (t[0] == '-' || t[0] == '+') {
    neg = t[0] == '-';
    i = 1;
  }
  int base = 10;
  if (t.size() > i + 1 && t[i] == '0' && (t[i + 1] == 'x' || t[i + 1] == 'X')) {
    base = 16;
    i += 2;
  }
  if (i >= t.size()) return std::nullopt;
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data() + i, t.data() + t.size(), v, base);
  if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
  int64_t sv = static_cast<int64_t>(v);
  return neg ? -sv : sv;
}

// `imm(reg)` memory operand.
std::optional<std::pair<int64_t, uint8_t>> parse_mem_operand(const std::string& t) {
  size_t open = t.find('(');
  if (open == std::string::npos || t.back() != ')') return std::nullopt;
  auto imm = parse_imm(t.substr(0, open));
  if (!imm && open == 0) imm = 0;  // `(c5)` means offset zero
  auto reg = parse_reg(t.substr(open + 1, t.size() - open - 2));
  if (!imm || !reg) return std::nullopt;
  return std::make_pair(*imm, *reg);
}

struct PendingBranch {
  size_t instr_index;
  std::string label;
  int line;
};

std::optional<CpKind> op_bounds_kind(const std::string& m) {
  if (m == "csetwbrbound") return CpKind::WriteBeforeRead;
  if (m == "csetwbxbound") return CpKind::WriteBeforeExecute;
  if (m == "csetrobound") return CpKind::WriteBeforeReadOnly;
  if (m == "csetxobound") return CpKind::WriteBeforeExecuteOnly;
  if (m == "csetwtbound") return CpKind::WriteOnce;
  if (m == "csetrtbound") return CpKind::ReadOnce;
  if (m == "csetxtbound") return CpKind::ExecuteOnce;
  return std::nullopt;
}

std::optional<uint8_t> mem_width(const std::string& m) {
  if (m == "lb" || m == "sb") return 1;
  if (m == "lh" || m == "sh") return 2;
  if (m == "lw" || m == "sw") return 4;
  if (m == "ld" || m == "sd") return 8;
  return std::nullopt;
}

}  // namespace

Expected<Program, ParseError> assemble(const std::string& source) {
  Program prog;
  std::vector<PendingBranch> pending;

  std::istringstream in(source);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (size_t c = line.find(';'); c != std::string::npos) line = line.substr(0, c);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    // Labels, possibly followed by an instruction on the same line.
    while (true) {
      size_t colon = line.find(':');
      if (colon == std::string::npos) break;
      std::string label = line.substr(0, colon);
      if (label.empty() || label.find_first_of(" \t(),") != std::string::npos) break;
      if (prog.labels.count(label)) {
        return ParseError{line_no, "duplicate label '" + label + "'"};
      }
      prog.labels[label] = prog.code.size();
      size_t nb = line.find_first_not_of(" \t", colon + 1);
      line = nb == std::string::npos ? "" : line.substr(nb);
      if (line.empty()) break;
    }
    if (line.empty()) continue;

    size_t sp = line.find_first_of(" \t");
    std::string mnemonic = line.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    std::vector<std::string> ops = tokenize_operands(rest);

    Instruction ins;
    ins.line = line_no;

    auto err = [&](const std::string& msg) -> ParseError { return {line_no, msg}; };
    auto need = [&](size_t n) { return ops.size() == n; };
    auto reg_at = [&](size_t i) { return parse_reg(ops[i]); };

    auto three_reg = [&](Opcode op) -> std::optional<ParseError> {
      if (!need(3)) return err("expected 3 operands");
      auto rd = reg_at(0), rs1 = reg_at(1), rs2 = reg_at(2);
      if (!rd || !rs1 || !rs2) return err("expected registers");
      ins.op = op;
      ins.rd = *rd;
      ins.rs1 = *rs1;
      ins.rs2 = *rs2;
      return std::nullopt;
    };
    // Capability ops whose last operand may be a register or an immediate.
    auto cap_reg_or_imm = [&](Opcode op) -> std::optional<ParseError> {
      if (!need(3)) return err("expected 3 operands");
      auto rd = reg_at(0), rs1 = reg_at(1);
      if (!rd || !rs1) return err("expected registers");
      ins.op = op;
      ins.rd = *rd;
      ins.rs1 = *rs1;
      if (auto rs2 = reg_at(2)) {
        ins.rs2 = *rs2;
      } else if (auto imm = parse_imm(ops[2])) {
        ins.has_imm_operand = true;
        ins.imm = *imm;
      } else {
        return err("expected register or immediate");
      }
      return std::nullopt;
    };
    auto two_reg = [&](Opcode op) -> std::optional<ParseError> {
      if (!need(2)) return err("expected 2 operands");
      auto rd = reg_at(0), rs1 = reg_at(1);
      if (!rd || !rs1) return err("expected registers");
      ins.op = op;
      ins.rd = *rd;
      ins.rs1 = *rs1;
      return std::nullopt;
    };

    std::optional<ParseError> bad;
    if (mnemonic == "li") {
      if (!need(2)) bad = err("expected 2 operands");
      else {
        auto rd = reg_at(0);
        auto imm = parse_imm(ops[1]);
        if (!rd || !imm) bad = err("expected register, immediate");
        else { ins.op = Opcode::Li; ins.rd = *rd; ins.imm = *imm; }
      }
    } else if (mnemonic == "mv") {
      bad = two_reg(Opcode::Mv);
    } else if (mnemonic == "add") { bad = three_reg(Opcode::Add);
    } else if (mnemonic == "sub") { bad = three_reg(Opcode::Sub);
    } else if (mnemonic == "mul") { bad = three_reg(Opcode::Mul);
    } else if (mnemonic == "and") { bad = three_reg(Opcode::And);
    } else if (mnemonic == "or") { bad = three_reg(Opcode::Or);
    } else if (mnemonic == "xor") { bad = three_reg(Opcode::Xor);
    } else if (mnemonic == "slt") { bad = three_reg(Opcode::Slt);
    } else if (mnemonic == "addi") {
      if (!need(3)) bad = err("expected 3 operands");
      else {
        auto rd = reg_at(0), rs1 = reg_at(1);
        auto imm = parse_imm(ops[2]);
        if (!rd || !rs1 || !imm) bad = err("expected register, register, immediate");
        else { ins.op = Opcode::Addi; ins.rd = *rd; ins.rs1 = *rs1; ins.imm = *imm; }
      }
    } else if (mnemonic == "beq" || mnemonic == "bne" || mnemonic == "blt" ||
               mnemonic == "bge") {
      if (!need(3)) bad = err("expected 3 operands");
      else {
        auto rs1 = reg_at(0), rs2 = reg_at(1);
        if (!rs1 || !rs2) bad = err("expected registers");
        else {
          ins.op = mnemonic == "beq"   ? Opcode::Beq
                   : mnemonic == "bne" ? Opcode::Bne
                   : mnemonic == "blt" ? Opcode::Blt
                                       : Opcode::Bge;
          ins.rs1 = *rs1;
          ins.rs2 = *rs2;
          pending.push_back({prog.code.size(), ops[2], line_no});
        }
      }
    } else if (mnemonic == "jal") {
      if (!need(2)) bad = err("expected 2 operands");
      else {
        auto rd = reg_at(0);
        if (!rd) bad = err("expected register");
        else {
          ins.op = Opcode::Jal;
          ins.rd = *rd;
          pending.push_back({prog.code.size(), ops[1], line_no});
        }
      }
    } else if (mnemonic == "jalr") {
      if (need(2)) {
        auto rd = reg_at(0), rs1 = reg_at(1);
        if (!rd || !rs1) bad = err("expected registers");
        else { ins.op = Opcode::Jalr; ins.rd = *rd; ins.rs1 = *rs1; }
      } else if (need(1)) {
        auto rs1 = reg_at(0);
        if (!rs1) bad = err("expected register");
        else { ins.op = Opcode::Jalr; ins.rd = 0; ins.rs1 = *rs1; }
      } else {
        bad = err("expected 1 or 2 operands");
      }
    } else if (mnemonic == "call") {
      if (!need(1)) bad = err("expected label");
      else {
        ins.op = Opcode::Jal;
        ins.rd = 1;  // link register c1
        pending.push_back({prog.code.size(), ops[0], line_no});
      }
    } else if (mnemonic == "ret") {
      if (!need(0)) bad = err("no operands expected");
      else { ins.op = Opcode::Jalr; ins.rd = 0; ins.rs1 = 1; }
    } else if (mnemonic == "halt") {
      if (!need(0)) bad = err("no operands expected");
      else ins.op = Opcode::Halt;
    } else if (mnemonic == "cmove") {
      bad = two_reg(Opcode::CMove);
    } else if (mnemonic == "cincoffset") {
      bad = cap_reg_or_imm(Opcode::CIncOffset);
    } else if (mnemonic == "csetbounds") {
      bad = cap_reg_or_imm(Opcode::CSetBounds);
    } else if (mnemonic == "candperm") {
      bad = cap_reg_or_imm(Opcode::CAndPerm);
    } else if (mnemonic == "csetaddr") {
      bad = cap_reg_or_imm(Opcode::CSetAddr);
    } else if (mnemonic == "cgetaddr") {
      bad = two_reg(Opcode::CGetAddr);
    } else if (mnemonic == "cgetbase") {
      bad = two_reg(Opcode::CGetBase);
    } else if (mnemonic == "cgetlen") {
      bad = two_reg(Opcode::CGetLen);
    } else if (mnemonic == "cgetoptop") {
      bad = two_reg(Opcode::CGetOpTop);
    } else if (auto kind = op_bounds_kind(mnemonic)) {
      bad = cap_reg_or_imm(Opcode::CSetOpBounds);
      ins.cp_kind = *kind;
    } else if (auto width = mem_width(mnemonic)) {
      if (!need(2)) bad = err("expected 2 operands");
      else {
        auto r = reg_at(0);
        auto mem = parse_mem_operand(ops[1]);
        if (!r || !mem) bad = err("expected register, imm(register)");
        else {
          const bool is_store = mnemonic[0] == 's';
          ins.op = is_store ? Opcode::Store : Opcode::Load;
          ins.size = *width;
          ins.imm = mem->first;
          ins.rs1 = mem->second;
          if (is_store) ins.rs2 = *r; else ins.rd = *r;
        }
      }
    } else if (mnemonic == "clc" || mnemonic == "csc") {
      if (!need(2)) bad = err("expected 2 operands");
      else {
        auto r = reg_at(0);
        auto mem = parse_mem_operand(ops[1]);
        if (!r || !mem) bad = err("expected register, imm(register)");
        else {
          ins.size = 16;
          ins.imm = mem->first;
          ins.rs1 = mem->second;
          if (mnemonic == "csc") { ins.op = Opcode::CStoreCap; ins.rs2 = *r; }
          else { ins.op = Opcode::CLoadCap; ins.rd = *r; }
        }
      }
    } else if (mnemonic == "ecall") {
      if (!need(1)) bad = err("expected 1 operand");
      else {
        auto imm = parse_imm(ops[0]);
        if (!imm) bad = err("expected immediate");
        else { ins.op = Opcode::ECall; ins.imm = *imm; }
      }
    } else {
      bad = err("unknown mnemonic '" + mnemonic + "'");
    }

    if (bad) return *bad;
    prog.code.push_back(ins);
  }

  for (const auto& p : pending) {
    auto it = prog.labels.find(p.label);
    if (it == prog.labels.end()) {
      return ParseError{p.line, "undefined label '" + p.label + "'"};
    }
    prog.code[p.instr_index].imm = static_cast<int64_t>(it->second);
  }
  if (auto it = prog.labels.find("_start"); it != prog.labels.end()) {
    prog.entry = it->second;
  }
  return prog;
}

}  // namespace monvm
