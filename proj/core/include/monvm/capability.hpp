#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace monvm {

/// Conditional-permission kind carried in the 3 CP control bits.
///
/// Each kind names a tracked operation (the one that advances the
/// operation bound) and a gated permission (the one withheld until the
/// tracked operation has covered the accessed range).  Disabled means the
/// capability behaves as a conventional capability.
enum class CpKind : uint8_t {
  WriteBeforeRead = 0,
  WriteBeforeExecute = 1,
  WriteBeforeReadOnly = 2,
  WriteBeforeExecuteOnly = 3,
  WriteOnce = 4,
  ReadOnce = 5,
  ExecuteOnce = 6,
  // All-ones: the disable-bit convention.  A freshly derived capability has
  // every CP disabled.
  Disabled = 7,
};

const char* to_string(CpKind kind);

enum class AccessKind : uint8_t { Load, Store, Fetch };

/// Conventional permissions.  These never increase on derivation.
struct Permissions {
  bool read = false;
  bool write = false;
  bool execute = false;
  bool load_cap = false;
  bool store_cap = false;

  static constexpr uint32_t kReadBit = 1u << 0;
  static constexpr uint32_t kWriteBit = 1u << 1;
  static constexpr uint32_t kExecuteBit = 1u << 2;
  static constexpr uint32_t kLoadCapBit = 1u << 3;
  static constexpr uint32_t kStoreCapBit = 1u << 4;

  static Permissions all() { return {true, true, true, true, true}; }
  static Permissions data() { return {true, true, false, true, true}; }
  static Permissions none() { return {}; }
  static Permissions from_bits(uint32_t bits);

  uint32_t bits() const;
  Permissions operator&(const Permissions& o) const;
  bool operator==(const Permissions&) const = default;

  /// True when every permission set here is also set in `other`.
  bool subset_of(const Permissions& other) const;
};

/// Decoded capability: the semantic object every check runs on.
///
/// `base`/`top` describe the conventional bounds [base, top) with
/// top <= 2^48.  `op_top` is the operation bound o and is meaningful only
/// when `cp != Disabled`; the cursor is masked to 48 bits in that case.
struct Capability {
  bool tag = false;
  Permissions perms;
  CpKind cp = CpKind::Disabled;
  uint32_t otype = 0;  // 18 bits, carried but inert
  bool flag = false;
  uint64_t base = 0;
  uint64_t top = 0;  // one-past-end, <= 2^48 for valid capabilities
  uint64_t addr = 0;
  uint64_t op_top = 0;  // meaningful only when cp != Disabled

  bool conditional() const { return cp != CpKind::Disabled; }
  uint64_t length() const { return top - base; }

  /// The untagged all-zero value integer registers decay to.
  static Capability null_with_addr(uint64_t value) {
    Capability c;
    c.addr = value;
    return c;
  }

  bool operator==(const Capability&) const = default;
};

/// In-memory/bit-exact form: two 64-bit words plus the out-of-band tag.
///
/// Meta word: [63:52]=perms [51:49]=p_op [48]=flag [47:30]=otype [29]=I_E
/// [28:17]=T [16:3]=B [2:0]=0.  Cursor word holds the full 64-bit address
/// for conventional capabilities; for conditional ones it is
/// [63:53]=O[13:3] [52:48]=O_E [47:0]=a.
struct EncodedCapability {
  uint64_t meta = 0;
  uint64_t cursor = 0;
  bool tag = false;

  bool operator==(const EncodedCapability&) const = default;
};

/// Intermediate values of one decode, exposed so tests can sweep the
/// correction table and the exponent reconstruction directly.
struct DecodeScratch {
  uint32_t exponent = 0;  // E
  bool internal_exponent = false;
  uint64_t a_top = 0;
  uint32_t a3 = 0;
  uint32_t b3 = 0;
  uint32_t t3 = 0;
  uint32_t o3 = 0;
  uint32_t r = 0;  // B3 - 1 (mod 8)
  bool l_carry_out = false;
  bool l_msb = false;
  int32_t c_t = 0;
  int32_t c_b = 0;
  int32_t c_o = 0;
  uint32_t t_field = 0;  // reconstituted 14-bit T
  uint32_t b_field = 0;  // 14-bit B
  uint32_t o_field = 0;  // 14-bit O (conditional only)
};

struct DecodeResult {
  Capability cap;
  DecodeScratch scratch;
  /// Set when the bit pattern claims a conditional capability but the
  /// exponent exceeds what the operation-bound encoding can carry (E > 2).
  bool malformed_conditional = false;
};

enum class CapErr : uint8_t {
  NotRepresentable,
  MonotonicityViolation,
  TagViolation,
  OpBoundsIncrease,
  RepresentabilityViolation,
  AddressMaskViolation,
  OutOfBounds,
};

const char* to_string(CapErr err);

/// Minimal result type for codec operations; traps stay out of band.
template <typename T>
class CapResult {
 public:
  CapResult(T value) : value_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  CapResult(CapErr err) : value_(err) {}            // NOLINT(google-explicit-constructor)

  bool ok() const { return std::holds_alternative<T>(value_); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return std::get<T>(value_); }
  T& value() { return std::get<T>(value_); }
  CapErr error() const { return std::get<CapErr>(value_); }

 private:
  std::variant<T, CapErr> value_;
};

enum class DenyReason : uint8_t {
  TagViolation,
  PermitViolation,
  BoundsViolation,
  OpBoundsViolation,
};

const char* to_string(DenyReason reason);

struct AccessDecision {
  bool allowed = false;
  DenyReason reason = DenyReason::TagViolation;

  static AccessDecision allow() { return {true, DenyReason::TagViolation}; }
  static AccessDecision deny(DenyReason r) { return {false, r}; }
};

}  // namespace monvm
