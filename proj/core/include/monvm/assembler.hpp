#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "monvm/capability.hpp"
#include "monvm/expected.hpp"

namespace monvm {

enum class Opcode : uint8_t {
  // integer
  Li, Mv, Add, Sub, Mul, And, Or, Xor, Slt, Addi,
  // control
  Beq, Bne, Blt, Bge, Jal, Jalr, Halt,
  // capability manipulation
  CMove, CIncOffset, CSetBounds, CAndPerm, CGetAddr, CSetAddr, CGetBase,
  CGetLen, CGetOpTop, CSetOpBounds,
  // memory
  Load, Store, CLoadCap, CStoreCap,
  // runtime services
  ECall,
};

enum class CounterClass : uint8_t { Integer, Branch, Load, Store, Cap, Runtime };

CounterClass counter_class(Opcode op);

struct Instruction {
  Opcode op;
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  uint8_t rs2 = 0;
  bool has_imm_operand = false;  // cap ops taking an immediate instead of rs2
  int64_t imm = 0;
  uint8_t size = 0;              // memory access width in bytes
  CpKind cp_kind = CpKind::Disabled;  // for CSetOpBounds
  int32_t line = 0;              // source line for diagnostics
};

struct Program {
  std::vector<Instruction> code;
  std::unordered_map<std::string, size_t> labels;
  size_t entry = 0;

  size_t size() const { return code.size(); }
};

struct ParseError {
  int line = 0;
  std::string message;
};

/// One instruction per line, `;` comments, `name:` labels.  Branch targets
/// must resolve at assembly time; entry is `_start` when present, else the
/// first instruction.
Expected<Program, ParseError> assemble(const std::string& source);

}  // namespace monvm
