#pragma once

// Reference decoder for the compressed capability format, transcribed
// equation by equation from the format's decode description.  Kept
// deliberately naive and table-driven so it shares no structure with the
// production decoder it checks.

#include <cstdint>
#include <optional>

#include "monvm/capability.hpp"

namespace oracle {

struct Decoded {
  bool tag = false;
  unsigned perms = 0;
  unsigned cp = 7;
  unsigned otype = 0;
  bool flag = false;
  uint64_t base = 0;
  uint64_t top = 0;
  uint64_t addr = 0;
  uint64_t op_top = 0;
  bool conditional = false;
  unsigned exponent = 0;
  bool internal_exponent = false;
};

struct CorrectionRow {
  bool a_lt_r;
  bool y_lt_r;
  int c;
};

// The published four-row truth table, looked up literally.
inline int table_correction(unsigned a3, unsigned y3, unsigned r) {
  static const CorrectionRow rows[4] = {
      {false, false, 0},
      {false, true, +1},
      {true, false, -1},
      {true, true, 0},
  };
  const bool a_lt = a3 < r;
  const bool y_lt = y3 < r;
  for (const auto& row : rows) {
    if (row.a_lt_r == a_lt && row.y_lt_r == y_lt) return row.c;
  }
  return 0;
}

inline uint64_t low_bits(uint64_t v, unsigned n) {
  if (n == 0) return 0;
  if (n >= 64) return v;
  return v & ((1ull << n) - 1);
}

inline Decoded decode(uint64_t meta, uint64_t cursor, bool tag) {
  Decoded d;
  d.tag = tag;
  d.perms = static_cast<unsigned>(meta >> 52);
  d.cp = static_cast<unsigned>((meta >> 49) & 0x7);
  d.flag = (meta >> 48) & 1;
  d.otype = static_cast<unsigned>((meta >> 30) & 0x3FFFF);
  const bool ie = (meta >> 29) & 1;
  const unsigned t_stored = static_cast<unsigned>((meta >> 17) & 0xFFF);
  const unsigned b_stored = static_cast<unsigned>((meta >> 3) & 0x3FFF);
  d.conditional = d.cp != 7;
  d.internal_exponent = ie;

  unsigned o_top11 = 0;  // O[13:3]
  unsigned o_e = 0;
  if (d.conditional) {
    o_top11 = static_cast<unsigned>(cursor >> 53);
    o_e = static_cast<unsigned>((cursor >> 48) & 0x1F);
    d.addr = low_bits(cursor, 48);
  } else {
    d.addr = cursor;
  }

  unsigned e = 0;
  unsigned t14 = 0;
  unsigned b14 = 0;
  unsigned o14 = 0;
  uint64_t o_sub = 0;
  bool l_carry = false;
  bool l_msb = false;
  if (!ie) {
    // E = 0; T[2:0] = T_E; B[2:0] = B_E; O[2:0] = O_E[4:2]
    e = 0;
    t14 = t_stored;
    b14 = b_stored;
    o14 = (o_top11 << 3) | ((o_e >> 2) & 7);
    l_carry = (t14 & 0xFFF) < (b14 & 0xFFF);  // T[11:0] < B[11:0]
    l_msb = false;
  } else {
    // E = {T_E, B_E}; T[2:0] = B[2:0] = 0; O[2:0] = O_E[E+2:E]
    e = ((t_stored & 7) << 3) | (b_stored & 7);
    t14 = t_stored - (t_stored & 7);
    b14 = b_stored - (b_stored & 7);
    if (e <= 2) {
      o14 = (o_top11 << 3) | ((o_e >> e) & 7);
      o_sub = low_bits(o_e, e);  // O_E[E-1:0]
    } else {
      o14 = o_top11 << 3;
    }
    l_carry = ((t14 >> 3) & 0x1FF) < ((b14 >> 3) & 0x1FF);  // T[11:3] < B[11:3]
    l_msb = true;
  }
  d.exponent = e;

  // T[13:12] = B[13:12] + L_carry_out + L_msb
  const unsigned t_high = ((b14 >> 12) + (l_carry ? 1u : 0u) + (l_msb ? 1u : 0u)) % 4;
  t14 = (t_high << 12) | (t14 & 0xFFF);

  // a_top = a[47:E+14] (conditional) or a[63:E+14] (conventional)
  const unsigned addr_width = d.conditional ? 48 : 64;
  const unsigned shift = e + 14;
  uint64_t a_top = shift < 64 ? (d.addr >> shift) : 0;
  const unsigned a_top_width = addr_width > shift ? addr_width - shift : 0;

  const unsigned a3 = static_cast<unsigned>((e + 11) < 64 ? (d.addr >> (e + 11)) & 7 : 0);
  const unsigned b3 = (b14 >> 11) & 7;
  const unsigned t3 = (t14 >> 11) & 7;
  const unsigned o3 = (o14 >> 11) & 7;
  const unsigned r = (b3 + 8 - 1) % 8;  // R = B_3 - 1

  auto place = [&](int c, unsigned mant, uint64_t sub) -> uint64_t {
    uint64_t adj = low_bits(a_top + static_cast<uint64_t>(static_cast<int64_t>(c)),
                            a_top_width);
    unsigned __int128 v = adj;
    v <<= 14;
    v |= mant;
    v <<= e;
    v |= sub;
    return static_cast<uint64_t>(v);
  };

  d.base = place(table_correction(a3, b3, r), b14, 0);
  d.top = place(table_correction(a3, t3, r), t14, 0);
  if (d.conditional) {
    d.op_top = place(table_correction(a3, o3, r), o14, ie ? o_sub : 0);
  }
  return d;
}

// Meta/cursor word builders for hand-made test vectors.
inline uint64_t make_meta(unsigned perms, unsigned cp, bool flag, unsigned otype,
                          bool ie, unsigned t_stored, unsigned b_stored) {
  return (static_cast<uint64_t>(perms & 0xFFF) << 52) |
         (static_cast<uint64_t>(cp & 7) << 49) |
         (static_cast<uint64_t>(flag ? 1 : 0) << 48) |
         (static_cast<uint64_t>(otype & 0x3FFFF) << 30) |
         (static_cast<uint64_t>(ie ? 1 : 0) << 29) |
         (static_cast<uint64_t>(t_stored & 0xFFF) << 17) |
         (static_cast<uint64_t>(b_stored & 0x3FFF) << 3);
}

inline uint64_t make_conditional_cursor(unsigned o_top11, unsigned o_e, uint64_t addr) {
  return (static_cast<uint64_t>(o_top11 & 0x7FF) << 53) |
         (static_cast<uint64_t>(o_e & 0x1F) << 48) | low_bits(addr, 48);
}

}  // namespace oracle
