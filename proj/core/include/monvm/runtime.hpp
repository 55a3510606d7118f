#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "monvm/capability.hpp"
#include "monvm/codec.hpp"
#include "monvm/expected.hpp"

namespace monvm {

class TaggedMemory;

/// What the allocator does to a fresh block, mirroring the build modes.
enum class MallocPolicy : uint8_t {
  NoCap,     // plain pointer, no bounds-setting cost
  Plain,     // exact bounds only (purecap)
  OpBounds,  // bounds + write-before-read frontier at zero
  Zeroed,    // bounds + zero-fill, conditional permission left disabled
};

enum class RuntimeErr : uint8_t { OutOfMemory, InvalidFree };

struct HeapStats {
  uint64_t mallocs = 0;
  uint64_t frees = 0;
  uint64_t live_bytes = 0;
};

struct Counters {
  uint64_t integer = 0;
  uint64_t branch = 0;
  uint64_t load = 0;
  uint64_t store = 0;
  uint64_t cap = 0;
  uint64_t runtime = 0;

  uint64_t total() const { return integer + branch + load + store + cap + runtime; }
  bool operator==(const Counters&) const = default;
};

/// Segregated power-of-two free lists over a bump arena.  Block headers sit
/// in the 16 bytes below each user region, outside every user capability.
class HeapState {
 public:
  HeapState() = default;
  HeapState(Capability arena, uint64_t arena_base, uint64_t arena_top);

  const Capability& arena() const { return arena_; }
  const HeapStats& stats() const { return stats_; }

  static constexpr uint64_t kMinBlock = 16;
  static constexpr uint64_t kHeaderSize = 16;

  friend Expected<Capability, RuntimeErr> rt_malloc(HeapState& heap,
                                                    TaggedMemory& mem, uint64_t size,
                                                    MallocPolicy policy,
                                                    Counters& counters);
  friend Expected<bool, RuntimeErr> rt_free(HeapState& heap, const Capability& cap,
                                            Counters& counters);

 private:
  struct Block {
    uint64_t user_base = 0;
    uint64_t cls = 0;  // rounded block size
    bool free = false;
  };

  Capability arena_;
  uint64_t arena_base_ = 0;
  uint64_t arena_top_ = 0;
  uint64_t bump_ = 0;
  std::unordered_map<uint64_t, Block> blocks_;             // keyed by user base
  std::unordered_map<uint64_t, std::vector<uint64_t>> free_lists_;  // cls -> bases
  HeapStats stats_;
};

/// Returns a capability exactly covering the rounded allocation.  Under
/// OpBounds the frontier starts at the base, so the block is writable only;
/// under Zeroed the block is filled with zeros and stays conventional, with
/// the fill visible in the store counter.
Expected<Capability, RuntimeErr> rt_malloc(HeapState& heap, TaggedMemory& mem,
                                           uint64_t size, MallocPolicy policy,
                                           Counters& counters);

/// Returns the block to its size-class list.  No revocation: dangling
/// capabilities stay usable until the memory is handed out again.
Expected<bool, RuntimeErr> rt_free(HeapState& heap, const Capability& cap,
                                   Counters& counters);

}  // namespace monvm
