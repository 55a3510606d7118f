#include "monvm/codec.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <sstream>

namespace monvm {

namespace {

constexpr uint64_t kAddrMask48 = kAddressSpaceTop - 1;

constexpr uint64_t bits(uint64_t value, uint32_t hi, uint32_t lo) {
  return (value >> lo) & ((hi - lo == 63) ? ~0ull : ((1ull << (hi - lo + 1)) - 1));
}

// Correction table of the bounds decoder: the bound's top mantissa bits are
// compared against the representable-region boundary R; the sign of the
// correction follows from which side of R the bound and the address fall on.
int32_t correction(uint32_t x3, uint32_t y3, uint32_t r) {
  return static_cast<int32_t>(y3 < r) - static_cast<int32_t>(x3 < r);
}

uint64_t compose(uint64_t a_top, int32_t corr, uint32_t a_top_width,
                 uint32_t mantissa, uint32_t exponent, uint64_t sub_bits) {
  uint64_t adjusted = a_top + static_cast<uint64_t>(static_cast<int64_t>(corr));
  if (a_top_width == 0) {
    adjusted = 0;
  } else if (a_top_width < 64) {
    adjusted &= (1ull << a_top_width) - 1;
  }
  unsigned __int128 value =
      (static_cast<unsigned __int128>(adjusted) << (exponent + kMantissaWidth)) |
      (static_cast<unsigned __int128>(mantissa) << exponent) | sub_bits;
  return static_cast<uint64_t>(value);
}

}  // namespace

const char* to_string(CpKind kind) {
  switch (kind) {
    case CpKind::WriteBeforeRead: return "write-before-read";
    case CpKind::WriteBeforeExecute: return "write-before-execute";
    case CpKind::WriteBeforeReadOnly: return "write-before-read-only";
    case CpKind::WriteBeforeExecuteOnly: return "write-before-execute-only";
    case CpKind::WriteOnce: return "write-once";
    case CpKind::ReadOnce: return "read-once";
    case CpKind::ExecuteOnce: return "execute-once";
    case CpKind::Disabled: return "disabled";
  }
  return "?";
}

const char* to_string(CapErr err) {
  switch (err) {
    case CapErr::NotRepresentable: return "NotRepresentable";
    case CapErr::MonotonicityViolation: return "MonotonicityViolation";
    case CapErr::TagViolation: return "TagViolation";
    case CapErr::OpBoundsIncrease: return "OpBoundsIncrease";
    case CapErr::RepresentabilityViolation: return "RepresentabilityViolation";
    case CapErr::AddressMaskViolation: return "AddressMaskViolation";
    case CapErr::OutOfBounds: return "OutOfBounds";
  }
  return "?";
}

const char* to_string(DenyReason reason) {
  switch (reason) {
    case DenyReason::TagViolation: return "TagViolation";
    case DenyReason::PermitViolation: return "PermitViolation";
    case DenyReason::BoundsViolation: return "BoundsViolation";
    case DenyReason::OpBoundsViolation: return "OpBoundsViolation";
  }
  return "?";
}

Permissions Permissions::from_bits(uint32_t b) {
  Permissions p;
  p.read = b & kReadBit;
  p.write = b & kWriteBit;
  p.execute = b & kExecuteBit;
  p.load_cap = b & kLoadCapBit;
  p.store_cap = b & kStoreCapBit;
  return p;
}

uint32_t Permissions::bits() const {
  return (read ? kReadBit : 0) | (write ? kWriteBit : 0) |
         (execute ? kExecuteBit : 0) | (load_cap ? kLoadCapBit : 0) |
         (store_cap ? kStoreCapBit : 0);
}

Permissions Permissions::operator&(const Permissions& o) const {
  return from_bits(bits() & o.bits());
}

bool Permissions::subset_of(const Permissions& other) const {
  return (bits() & ~other.bits()) == 0;
}

DecodeResult decode(const EncodedCapability& enc) {
  DecodeResult out;
  DecodeScratch& s = out.scratch;
  Capability& cap = out.cap;

  const uint64_t meta = enc.meta;
  cap.tag = enc.tag;
  cap.perms = Permissions::from_bits(static_cast<uint32_t>(bits(meta, 63, 52)));
  cap.cp = static_cast<CpKind>(bits(meta, 51, 49));
  cap.flag = bits(meta, 48, 48);
  cap.otype = static_cast<uint32_t>(bits(meta, 47, 30));
  const bool internal_e = bits(meta, 29, 29);
  const uint32_t t_stored = static_cast<uint32_t>(bits(meta, 28, 17));  // 12 bits
  const uint32_t b_stored = static_cast<uint32_t>(bits(meta, 16, 3));   // 14 bits

  const bool conditional = cap.conditional();
  uint32_t o_hi = 0;
  uint32_t o_e = 0;
  if (conditional) {
    o_hi = static_cast<uint32_t>(bits(enc.cursor, 63, 53));  // O[13:3]
    o_e = static_cast<uint32_t>(bits(enc.cursor, 52, 48));
    cap.addr = enc.cursor & kAddrMask48;
  } else {
    cap.addr = enc.cursor;
  }

  uint32_t exponent = 0;
  uint32_t t_field = 0;
  uint32_t b_field = b_stored;
  uint32_t o_low3 = 0;
  uint64_t o_sub = 0;
  bool l_carry = false;
  bool l_msb = false;
  if (!internal_e) {
    t_field = t_stored;
    o_low3 = (o_e >> 2) & 7;  // O_E[4:2]
    l_carry = (t_field & 0xFFF) < (b_field & 0xFFF);
  } else {
    exponent = ((t_stored & 7) << 3) | (b_stored & 7);  // E = {T_E, B_E}
    t_field = t_stored & ~7u;
    b_field = b_stored & ~7u;
    if (exponent <= kMaxConditionalExponent) {
      o_low3 = (o_e >> exponent) & 7;  // O_E[E+2:E]
      o_sub = o_e & ((1u << exponent) - 1);
    } else if (conditional) {
      out.malformed_conditional = true;
    }
    l_carry = ((t_field >> 3) & 0x1FF) < ((b_field >> 3) & 0x1FF);
    l_msb = true;
  }

  const uint32_t t_hi = ((b_field >> 12) + (l_carry ? 1 : 0) + (l_msb ? 1 : 0)) & 3;
  t_field = (t_hi << 12) | (t_field & 0xFFF);
  const uint32_t o_field = (o_hi << 3) | o_low3;

  const uint32_t addr_width = conditional ? kAddressBits : 64;
  const uint32_t shift = exponent + kMantissaWidth;
  const uint32_t a_top_width = addr_width > shift ? addr_width - shift : 0;
  const uint64_t a_top = shift < 64 ? (cap.addr >> shift) : 0;

  const uint32_t a3 =
      exponent + 11 < 64 ? static_cast<uint32_t>((cap.addr >> (exponent + 11)) & 7) : 0;
  const uint32_t b3 = (b_field >> 11) & 7;
  const uint32_t t3 = (t_field >> 11) & 7;
  const uint32_t o3 = (o_field >> 11) & 7;
  const uint32_t r = (b3 - 1) & 7;

  s.exponent = exponent;
  s.internal_exponent = internal_e;
  s.a_top = a_top;
  s.a3 = a3;
  s.b3 = b3;
  s.t3 = t3;
  s.o3 = o3;
  s.r = r;
  s.l_carry_out = l_carry;
  s.l_msb = l_msb;
  s.c_t = correction(a3, t3, r);
  s.c_b = correction(a3, b3, r);
  s.c_o = correction(a3, o3, r);
  s.t_field = t_field;
  s.b_field = b_field;
  s.o_field = o_field;

  cap.base = compose(a_top, s.c_b, a_top_width, b_field, exponent, 0);
  cap.top = compose(a_top, s.c_t, a_top_width, t_field, exponent, 0);
  if (conditional) {
    cap.op_top = compose(a_top, s.c_o, a_top_width, o_field, exponent,
                         internal_e ? o_sub : 0);
  } else {
    cap.op_top = 0;
  }
  return out;
}

namespace {

// Assembles the two words for a given exponent choice; correctness is
// established by decoding the candidate and comparing, so this only has to
// place bits, not reason about corrections.
EncodedCapability assemble(const Capability& cap, bool internal_e, uint32_t exponent) {
  const bool conditional = cap.conditional();
  uint32_t t_stored;
  uint32_t b_stored;
  uint32_t o_hi = 0;
  uint32_t o_e = 0;
  if (!internal_e) {
    t_stored = static_cast<uint32_t>(cap.top & 0xFFF);
    b_stored = static_cast<uint32_t>(cap.base & 0x3FFF);
    if (conditional) {
      o_hi = static_cast<uint32_t>((cap.op_top >> 3) & 0x7FF);
      o_e = static_cast<uint32_t>((cap.op_top & 7) << 2);
    }
  } else {
    t_stored = static_cast<uint32_t>(((cap.top >> exponent) & 0xFF8) | ((exponent >> 3) & 7));
    b_stored = static_cast<uint32_t>(((cap.base >> exponent) & 0x3FF8) | (exponent & 7));
    if (conditional) {
      const uint64_t o_mant = (cap.op_top >> exponent) & 0x3FFF;
      o_hi = static_cast<uint32_t>(o_mant >> 3);
      o_e = static_cast<uint32_t>((((o_mant & 7) << exponent) |
                                   (cap.op_top & ((1u << exponent) - 1))) &
                                  0x1F);
    }
  }

  EncodedCapability enc;
  enc.tag = cap.tag;
  enc.meta = (static_cast<uint64_t>(cap.perms.bits() & 0xFFF) << 52) |
             (static_cast<uint64_t>(static_cast<uint8_t>(cap.cp) & 7) << 49) |
             (static_cast<uint64_t>(cap.flag ? 1 : 0) << 48) |
             (static_cast<uint64_t>(cap.otype & 0x3FFFF) << 30) |
             (static_cast<uint64_t>(internal_e ? 1 : 0) << 29) |
             (static_cast<uint64_t>(t_stored & 0xFFF) << 17) |
             (static_cast<uint64_t>(b_stored & 0x3FFF) << 3);
  if (conditional) {
    enc.cursor = (static_cast<uint64_t>(o_hi & 0x7FF) << 53) |
                 (static_cast<uint64_t>(o_e & 0x1F) << 48) | (cap.addr & kAddrMask48);
  } else {
    enc.cursor = cap.addr;
  }
  return enc;
}

bool fields_match(const Capability& cap, const DecodeResult& dec) {
  const Capability& d = dec.cap;
  if (d.tag != cap.tag || !(d.perms == cap.perms) || d.cp != cap.cp ||
      d.otype != cap.otype || d.flag != cap.flag) {
    return false;
  }
  if (d.base != cap.base || d.top != cap.top || d.addr != cap.addr) return false;
  if (cap.conditional() && (d.op_top != cap.op_top || dec.malformed_conditional)) {
    return false;
  }
  return true;
}

bool invariants_ok(const Capability& cap) {
  if (cap.base > cap.top) return false;
  if (cap.top > kAddressSpaceTop) return false;
  if (cap.conditional()) {
    if (cap.op_top < cap.base || cap.op_top > cap.top) return false;
    if (cap.addr >> kAddressBits) return false;
  }
  return true;
}

}  // namespace

CapResult<EncodedCapability> encode(const Capability& cap) {
  if (!invariants_ok(cap)) return CapErr::NotRepresentable;
  // Exact byte-precision form first, then internal-exponent forms from the
  // smallest exponent up; the first candidate that decodes back to the very
  // same fields wins.
  {
    EncodedCapability enc = assemble(cap, false, 0);
    if (fields_match(cap, decode(enc))) return enc;
  }
  const uint32_t max_e = cap.conditional() ? kMaxConditionalExponent : 44;
  for (uint32_t e = 0; e <= max_e; ++e) {
    EncodedCapability enc = assemble(cap, true, e);
    if (fields_match(cap, decode(enc))) return enc;
  }
  return CapErr::NotRepresentable;
}

bool representable(const Capability& cap) { return encode(cap).ok(); }

CapResult<Capability> set_bounds(const Capability& cap, uint64_t length) {
  if (!cap.tag) return CapErr::TagViolation;
  const uint64_t req_base = cap.addr;
  if (length > kAddressSpaceTop || req_base > kAddressSpaceTop - length) {
    return CapErr::MonotonicityViolation;
  }
  const uint64_t req_top = req_base + length;
  if (req_base < cap.base || req_top > cap.top) return CapErr::MonotonicityViolation;

  Capability result = cap;
  auto finish = [&](uint64_t b, uint64_t t) -> std::optional<Capability> {
    result.base = b;
    result.top = t;
    if (result.conditional()) {
      result.op_top = std::min(std::max(result.op_top, b), t);
    }
    if (!representable(result)) return std::nullopt;
    return result;
  };

  // Exact request first; thereafter round outward on the 2^(E+3) grid of
  // each candidate exponent until the pair becomes representable.
  if (auto done = finish(req_base, req_top)) return *done;
  for (uint32_t e = 0; e <= 44; ++e) {
    const uint64_t grain = 1ull << (e + 3);
    const uint64_t b = req_base & ~(grain - 1);
    const uint64_t t = (req_top + grain - 1) & ~(grain - 1);
    if (b < cap.base || t > cap.top) return CapErr::MonotonicityViolation;
    if (auto done = finish(b, t)) return *done;
  }
  return cap.conditional() ? CapErr::RepresentabilityViolation
                           : CapErr::NotRepresentable;
}

CapResult<Capability> set_op_bounds(const Capability& cap, CpKind kind,
                                    uint64_t length) {
  assert(kind != CpKind::Disabled);
  if (!cap.tag) return CapErr::TagViolation;
  if (cap.addr >> kAddressBits) return CapErr::AddressMaskViolation;
  if (cap.base > cap.top || length > cap.top - cap.base) return CapErr::OutOfBounds;
  const uint64_t new_op_top = cap.base + length;
  if (cap.conditional() && new_op_top > cap.op_top) return CapErr::OpBoundsIncrease;

  Capability result = cap;
  result.cp = kind;
  result.op_top = new_op_top;
  result.addr &= kAddrMask48;
  if (!representable(result)) return CapErr::RepresentabilityViolation;
  return result;
}

AccessKind tracked_operation(CpKind kind) {
  switch (kind) {
    case CpKind::ReadOnce: return AccessKind::Load;
    case CpKind::ExecuteOnce: return AccessKind::Fetch;
    default: return AccessKind::Store;
  }
}

bool exact_frontier_kind(CpKind kind) {
  switch (kind) {
    case CpKind::WriteBeforeReadOnly:
    case CpKind::WriteBeforeExecuteOnly:
    case CpKind::WriteOnce:
    case CpKind::ReadOnce:
    case CpKind::ExecuteOnce:
      return true;
    default:
      return false;
  }
}

AccessDecision check_access(const Capability& cap, uint64_t addr, uint32_t size,
                            AccessKind access, const EnforcementConfig& config) {
  if (!config.enforcing()) return AccessDecision::allow();
  if (!cap.tag) return AccessDecision::deny(DenyReason::TagViolation);

  bool permitted = false;
  switch (access) {
    case AccessKind::Load: permitted = cap.perms.read; break;
    case AccessKind::Store: permitted = cap.perms.write; break;
    case AccessKind::Fetch: permitted = cap.perms.execute; break;
  }
  if (!permitted) return AccessDecision::deny(DenyReason::PermitViolation);

  if (addr < cap.base || size > cap.top || addr > cap.top - size) {
    return AccessDecision::deny(DenyReason::BoundsViolation);
  }
  const uint64_t end = addr + size;

  if (cap.conditional()) {
    const CpKind cp = cap.cp;
    const bool gates_load = cp == CpKind::WriteBeforeRead ||
                            cp == CpKind::WriteBeforeReadOnly ||
                            cp == CpKind::ReadOnce;
    const bool gates_fetch = cp == CpKind::WriteBeforeExecute ||
                             cp == CpKind::WriteBeforeExecuteOnly ||
                             cp == CpKind::ExecuteOnce;
    const bool gates_store = exact_frontier_kind(cp) &&
                             tracked_operation(cp) == AccessKind::Store;
    switch (access) {
      case AccessKind::Load:
        if (gates_load) {
          if (cp == CpKind::ReadOnce) {
            if (addr != cap.op_top)
              return AccessDecision::deny(DenyReason::OpBoundsViolation);
          } else if (end > cap.op_top) {
            return AccessDecision::deny(DenyReason::OpBoundsViolation);
          }
        }
        break;
      case AccessKind::Fetch:
        if (gates_fetch) {
          if (cp == CpKind::ExecuteOnce) {
            if (addr != cap.op_top)
              return AccessDecision::deny(DenyReason::OpBoundsViolation);
          } else if (end > cap.op_top) {
            return AccessDecision::deny(DenyReason::OpBoundsViolation);
          }
        }
        break;
      case AccessKind::Store:
        if (gates_store) {
          if (addr != cap.op_top)
            return AccessDecision::deny(DenyReason::OpBoundsViolation);
        } else if (tracked_operation(cp) == AccessKind::Store &&
                   config.strict_store && addr > cap.op_top) {
          return AccessDecision::deny(DenyReason::OpBoundsViolation);
        }
        break;
    }
  }
  return AccessDecision::allow();
}

Capability advance_op_top(const Capability& cap, uint64_t addr, uint32_t size) {
  if (!cap.conditional()) return cap;
  Capability out = cap;
  const uint64_t end = addr + size;
  // Extend only when the access touches or straddles the frontier; writes
  // fully below leave it alone, and writes above leave an unreadable gap.
  if (addr <= cap.op_top && cap.op_top < end) {
    out.op_top = std::min(end, cap.top);
  }
  return out;
}

std::string format_hex_vector(const EncodedCapability& enc) {
  char buf[36];
  std::snprintf(buf, sizeof(buf), "%d:%016llX:%016llX", enc.tag ? 1 : 0,
                static_cast<unsigned long long>(enc.meta),
                static_cast<unsigned long long>(enc.cursor));
  return buf;
}

std::optional<EncodedCapability> parse_hex_vector(const std::string& text) {
  unsigned tag = 0;
  unsigned long long meta = 0;
  unsigned long long cursor = 0;
  char trailing = 0;
  const int got = std::sscanf(text.c_str(), "%u:%llx:%llx%c", &tag, &meta, &cursor, &trailing);
  if (got != 3 || tag > 1) return std::nullopt;
  EncodedCapability enc;
  enc.tag = tag == 1;
  enc.meta = meta;
  enc.cursor = cursor;
  return enc;
}

std::string describe(const DecodeResult& result) {
  const Capability& c = result.cap;
  std::ostringstream os;
  os << "tag        " << (c.tag ? 1 : 0) << "\n";
  os << "cp         " << to_string(c.cp) << "\n";
  os << "perms      " << (c.perms.read ? "R" : "-") << (c.perms.write ? "W" : "-")
     << (c.perms.execute ? "X" : "-") << (c.perms.load_cap ? "L" : "-")
     << (c.perms.store_cap ? "S" : "-") << "\n";
  os << std::hex;
  os << "base       0x" << c.base << "\n";
  os << "top        0x" << c.top << "\n";
  os << "addr       0x" << c.addr << "\n";
  if (c.conditional()) os << "op_top     0x" << c.op_top << "\n";
  os << "otype      0x" << c.otype << "\n";
  os << std::dec;
  os << "flag       " << (c.flag ? 1 : 0) << "\n";
  os << "E          " << result.scratch.exponent
     << (result.scratch.internal_exponent ? " (internal)" : "") << "\n";
  if (result.malformed_conditional) os << "note       malformed conditional (E > 2)\n";
  return os.str();
}

}  // namespace monvm
