#include "monvm/runtime.hpp"

#include <bit>

#include "monvm/machine.hpp"

namespace monvm {

namespace {

// Fixed allocator-internal work per call, charged to the runtime counter.
constexpr uint64_t kMallocBaseCost = 18;
constexpr uint64_t kFreeBaseCost = 12;
constexpr uint64_t kHeaderMagic = 0x4d6f6e43ull;  // block marker

uint64_t size_class(uint64_t size) {
  return std::bit_ceil(std::max<uint64_t>(size, HeapState::kMinBlock));
}

// Exact bounds on the block need the base on the 2^(E+3) grid of the block
// size's exponent.
uint64_t required_alignment(uint64_t cls) {
  if (cls < (1ull << 12)) return 16;
  const uint64_t grain = cls >> 9;  // 2^(log2(cls)-12+3)
  return std::max<uint64_t>(grain, 16);
}

}  // namespace

HeapState::HeapState(Capability arena, uint64_t arena_base, uint64_t arena_top)
    : arena_(arena), arena_base_(arena_base), arena_top_(arena_top),
      bump_(arena_base) {}

Expected<Capability, RuntimeErr> rt_malloc(HeapState& heap, TaggedMemory& mem,
                                           uint64_t size, MallocPolicy policy,
                                           Counters& counters) {
  counters.runtime += kMallocBaseCost;
  if (size == 0 || size > heap.arena_top_ - heap.arena_base_) {
    return RuntimeErr::OutOfMemory;
  }
  const uint64_t cls = size_class(size);

  uint64_t user_base = 0;
  auto& list = heap.free_lists_[cls];
  if (!list.empty()) {
    user_base = list.back();
    list.pop_back();
    heap.blocks_[user_base].free = false;
  } else {
    const uint64_t align = required_alignment(cls);
    uint64_t candidate = (heap.bump_ + HeapState::kHeaderSize + align - 1) & ~(align - 1);
    if (candidate + cls > heap.arena_top_) return RuntimeErr::OutOfMemory;
    user_base = candidate;
    heap.bump_ = candidate + cls;
    heap.blocks_[user_base] = HeapState::Block{user_base, cls, false};
    mem.write_int(user_base - HeapState::kHeaderSize, 8, kHeaderMagic);
    mem.write_int(user_base - HeapState::kHeaderSize + 8, 8, cls);
  }

  Capability cap = heap.arena_;
  cap.addr = user_base;
  // Power-of-two size on a matching alignment is always exact.
  auto bounded = set_bounds(cap, cls);
  if (!bounded.ok()) return RuntimeErr::OutOfMemory;
  cap = bounded.value();
  cap.perms.execute = false;

  switch (policy) {
    case MallocPolicy::NoCap:
      break;
    case MallocPolicy::Plain:
      counters.cap += 1;  // csetbounds
      break;
    case MallocPolicy::OpBounds: {
      counters.cap += 2;  // csetbounds + csetwbrbound
      auto cond = set_op_bounds(cap, CpKind::WriteBeforeRead, 0);
      if (!cond.ok()) return RuntimeErr::OutOfMemory;
      cap = cond.value();
      break;
    }
    case MallocPolicy::Zeroed: {
      counters.cap += 1;  // csetbounds
      // One store and one pointer bump per word; strictly proportional to
      // the block size.
      mem.fill_zero(user_base, cls);
      counters.store += cls / 8;
      counters.integer += cls / 8;
      break;
    }
  }

  heap.stats_.mallocs += 1;
  heap.stats_.live_bytes += cls;
  return cap;
}

Expected<bool, RuntimeErr> rt_free(HeapState& heap, const Capability& cap,
                                   Counters& counters) {
  counters.runtime += kFreeBaseCost;
  if (!cap.tag) return RuntimeErr::InvalidFree;
  auto it = heap.blocks_.find(cap.base);
  if (it == heap.blocks_.end() || it->second.free) return RuntimeErr::InvalidFree;
  it->second.free = true;
  heap.free_lists_[it->second.cls].push_back(it->second.user_base);
  heap.stats_.frees += 1;
  heap.stats_.live_bytes -= it->second.cls;
  return true;
}

}  // namespace monvm
