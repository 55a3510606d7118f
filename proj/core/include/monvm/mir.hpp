#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "monvm/expected.hpp"

namespace monvm::mir {

enum class Type : uint8_t { Int, Cap };

using ValueId = uint32_t;
inline constexpr ValueId kNoValue = ~0u;

enum class Op : uint8_t {
  Alloca,       // imm = byte size; wbr_annotated
  StackCap,     // a = alloca, imm = size
  SetOpBounds,  // a = cap, imm = length
  Load,         // a = address; result type selects int64 or capability
  Store,        // a = value, b = address
  Gep,          // a = base cap, b = byte offset (int value)
  Pin,          // a = cap; placeholder call, semantically the identity
  BinOp,        // bin, a, b
  Const,        // imm
  Call,         // callee, args
  Phi,          // incomings (value, block)
  Br,           // target
  CondBr,       // a = condition, target / target2
  Ret,          // a = value or kNoValue
};

enum class BinKind : uint8_t { Add, Sub, Mul, And, Or, Xor, Slt };

struct Instr {
  Op op;
  ValueId result = kNoValue;
  Type type = Type::Int;  // result type
  ValueId a = kNoValue;
  ValueId b = kNoValue;
  int64_t imm = 0;
  bool wbr_annotated = false;
  bool is_volatile = false;
  BinKind bin = BinKind::Add;
  std::string callee;
  std::vector<ValueId> args;
  std::vector<std::pair<ValueId, uint32_t>> incomings;
  uint32_t target = 0;
  uint32_t target2 = 0;
  int32_t line = 0;

  bool is_terminator() const {
    return op == Op::Br || op == Op::CondBr || op == Op::Ret;
  }
};

struct Block {
  std::string name;
  std::vector<Instr> instrs;
};

struct Param {
  std::string name;
  Type type = Type::Int;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  bool has_ret = false;
  Type ret_type = Type::Int;
  bool wbr_function = false;
  std::vector<Block> blocks;

  // Value table; parameters occupy ids 0..params-1.
  std::vector<std::string> value_names;
  std::vector<Type> value_types;

  ValueId new_value(std::string name, Type type) {
    value_names.push_back(std::move(name));
    value_types.push_back(type);
    return static_cast<ValueId>(value_names.size() - 1);
  }
};

struct Module {
  std::vector<Function> functions;

  const Function* find(const std::string& name) const {
    for (const auto& f : functions) {
      if (f.name == name) return &f;
    }
    return nullptr;
  }
};

struct ParseError {
  int line = 0;
  std::string message;
};

struct VerifyError {
  std::string function;
  std::string message;
};

/// Parses the textual form and verifies the result.
Expected<Module, ParseError> parse_mir(const std::string& source);

/// SSA well-formedness: single definitions, dominated uses, phis at block
/// heads, resolved branch targets, consistent types and call signatures.
Expected<bool, VerifyError> verify(const Module& module);

std::string to_text(const Module& module);
std::string to_text(const Function& fn);

/// Builtin runtime entry points every backend provides.
bool is_builtin(const std::string& callee);

}  // namespace monvm::mir
