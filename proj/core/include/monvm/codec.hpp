#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "monvm/capability.hpp"

namespace monvm {

inline constexpr uint32_t kMantissaWidth = 14;   // MW
inline constexpr uint32_t kAddressBits = 48;     // masked-address width
inline constexpr uint64_t kAddressSpaceTop = 1ull << kAddressBits;
inline constexpr uint32_t kMaxConditionalExponent = 2;

/// Simulator-wide enforcement switches.
struct EnforcementConfig {
  enum class Mode : uint8_t { NoCap, PureCap, Wbr };
  enum class MallocMode : uint8_t { Auto, Plain, Zeroed };

  Mode mode = Mode::Wbr;
  /// Trap on stores above the operation bound instead of leaving a gap.
  bool strict_store = false;
  /// Zero the destination and continue instead of trapping on a load past
  /// the operation bound.
  bool auto_init = false;
  /// Ignore operation-bound denials entirely (measurement runs of
  /// un-linearized builds, which are not guaranteed to run otherwise).
  bool ignore_op_bounds = false;
  /// What the allocator does to fresh blocks; Auto follows `mode`.
  MallocMode malloc_mode = MallocMode::Auto;

  bool enforcing() const { return mode != Mode::NoCap; }
};

/// Decode is total: every 128-bit pattern yields a capability (possibly
/// untagged or flagged malformed), never an error.
DecodeResult decode(const EncodedCapability& enc);

/// Bit-exact inverse of decode for exactly representable capabilities.
/// Never rounds; rounding lives in set_bounds.
CapResult<EncodedCapability> encode(const Capability& cap);

/// True when encode(cap) succeeds and round-trips.
bool representable(const Capability& cap);

/// Narrow bounds to [addr, addr+length), rounding outward to the
/// representable grid of the minimal exponent.  CP kind is unchanged.
CapResult<Capability> set_bounds(const Capability& cap, uint64_t length);

/// Activate (or tighten) a conditional permission: cp := kind and
/// op_top := base + length.  Never raises an existing operation bound.
CapResult<Capability> set_op_bounds(const Capability& cap, CpKind kind,
                                    uint64_t length);

/// The two-stage access check: conventional permissions and bounds, then
/// the conditional gate selected by the capability's CP kind.
AccessDecision check_access(const Capability& cap, uint64_t addr,
                            uint32_t size, AccessKind access,
                            const EnforcementConfig& config);

/// Post-check frontier update for the tracked operation.  Extends op_top
/// when the access touches it; re-covered and gapped accesses leave it
/// unchanged.
Capability advance_op_top(const Capability& cap, uint64_t addr, uint32_t size);

/// The operation whose occurrence the kind tracks (advances op_top).
AccessKind tracked_operation(CpKind kind);

/// Kinds whose tracked operation must land exactly on the frontier
/// (the *-Once family).
bool exact_frontier_kind(CpKind kind);

/// Test-vector format `tag:meta_hex:cursor_hex`.
std::string format_hex_vector(const EncodedCapability& enc);
std::optional<EncodedCapability> parse_hex_vector(const std::string& text);

/// Human-readable field dump used by the codec CLI.
std::string describe(const DecodeResult& result);

}  // namespace monvm
