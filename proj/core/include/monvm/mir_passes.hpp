#pragma once

#include "monvm/mir.hpp"

namespace monvm::mir {

/// Which stack allocations receive a write-before-read frontier.
enum class InstrumentMode : uint8_t {
  AllStack,            // compiler option: every alloca
  AnnotatedFunctions,  // every alloca in functions marked [wbr]
  AnnotatedVariables,  // only allocas marked [wbr]
};

/// Constant folding and redundant-copy elimination (zero-offset geps,
/// single-source phis); just enough to create the live-range pressure the
/// linearization pass has to survive.  Never touches memory accesses.
Module pass_optimize(const Module& module);

/// Inserts a bounded stack capability (when the bounds would otherwise be
/// elided) and a zero-length operation-bound activation after each selected
/// alloca, rewriting all uses to the activated capability.
Module pass_cp_instrument(const Module& module, InstrumentMode mode);

/// Keeps one canonical instance of every conditional capability on all
/// store paths: placeholder pins on store operands (targeting gep bases),
/// demotion of block-crossing conditional capabilities to stack slots, and
/// refresh stores after every frontier store whose capability also lives in
/// memory.
Module pass_store_linearize(const Module& module);

}  // namespace monvm::mir
