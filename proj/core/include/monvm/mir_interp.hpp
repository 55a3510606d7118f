#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "monvm/mir.hpp"

namespace monvm::mir {

/// Reference interpreter: the intended semantics the compiled artifact is
/// measured against.  Conditional state lives per region (one canonical
/// frontier per allocation), so it is immune to the register-copy hazards
/// the store-linearization pass exists to fix.
struct InterpOptions {
  /// Enforce write-before-read frontiers (instrumented stack regions and
  /// heap blocks).  Off, the interpreter reads zeros from fresh memory.
  bool enforce_wbr = true;
  uint64_t fuel = 10'000'000;
};

struct InterpTrap {
  std::string kind;  // "uninit-read", "bounds", "fuel", ...
  std::string detail;
};

struct InterpResult {
  int64_t exit_code = 0;
  std::vector<int64_t> prints;
  std::optional<InterpTrap> trap;

  bool clean() const { return !trap.has_value(); }
};

InterpResult interpret(const Module& module, const InterpOptions& options);

}  // namespace monvm::mir
