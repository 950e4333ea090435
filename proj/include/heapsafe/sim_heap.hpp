#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "heapsafe/errors.hpp"

namespace heapsafe {

/// Byte-addressable simulated heap arena with a first-fit allocator.
///
/// The arena covers [base, base + capacity). Allocation is byte-granular
/// with no headers or padding, so back-to-back requests return adjacent
/// blocks and a freed hole is reused by the first later request that fits.
/// Data accesses are range-checked against the arena only; the allocator
/// deliberately does not police reads or writes into freed or neighbouring
/// blocks, since producing those silent corruptions is what the arena is
/// for.
///
/// An optional address mask models a memory interface that ignores the top
/// pointer bits: data access addresses are masked before the range check.
class SimHeap {
 public:
  SimHeap(std::uint64_t base, std::uint64_t capacity)
      : base_(base), bytes_(capacity, 0) {
    if (capacity == 0) throw ZeroSize("heap capacity must be positive");
    free_[base] = capacity;
  }

  /// First-fit allocation. Scans free blocks in address order and carves
  /// the request from the lowest one that fits.
  std::uint64_t alloc(std::uint64_t size) {
    if (size == 0) throw ZeroSize("allocation size must be positive");
    for (auto it = free_.begin(); it != free_.end(); ++it) {
      const auto [addr, len] = *it;
      if (len < size) continue;
      free_.erase(it);
      if (len > size) free_[addr + size] = len - size;
      allocations_[addr] = Allocation{size, true};
      return addr;
    }
    throw OutOfMemory("no free block of " + std::to_string(size) + " bytes");
  }

  /// Returns the block at `addr` to the free list, coalescing with
  /// adjacent free blocks. `addr` must be the base of a live allocation.
  void free(std::uint64_t addr) {
    auto it = allocations_.find(addr);
    if (it == allocations_.end())
      throw ForeignPointer("free of address that is not an allocation base");
    if (!it->second.live)
      throw DoubleFree("free of already freed block");
    it->second.live = false;
    release(addr, it->second.size);
  }

  /// True if `addr` is the base of a currently live allocation.
  bool is_live(std::uint64_t addr) const {
    auto it = allocations_.find(addr);
    return it != allocations_.end() && it->second.live;
  }

  /// Size of the live allocation based at `addr`, or 0 if none.
  std::uint64_t allocation_size(std::uint64_t addr) const {
    auto it = allocations_.find(addr);
    return (it != allocations_.end() && it->second.live) ? it->second.size : 0;
  }

  std::uint8_t load(std::uint64_t addr) const { return bytes_[index(addr)]; }

  void store(std::uint64_t addr, std::uint8_t value) { bytes_[index(addr)] = value; }

  /// Data accesses ignore address bits cleared in `mask`.
  void set_address_mask(std::uint64_t mask) { mask_ = mask; }

  std::uint64_t base() const { return base_; }
  std::uint64_t capacity() const { return bytes_.size(); }

  /// Full arena contents; two arenas with equal snapshots went through
  /// byte-identical data histories.
  const std::vector<std::uint8_t>& snapshot() const { return bytes_; }

  std::size_t live_count() const {
    std::size_t n = 0;
    for (const auto& [addr, a] : allocations_) n += a.live ? 1 : 0;
    return n;
  }

 private:
  struct Allocation {
    std::uint64_t size = 0;
    bool live = false;
  };

  std::size_t index(std::uint64_t addr) const {
    const std::uint64_t effective = addr & mask_;
    if (effective < base_ || effective - base_ >= bytes_.size())
      throw InvalidAddress("access outside heap arena");
    return static_cast<std::size_t>(effective - base_);
  }

  void release(std::uint64_t addr, std::uint64_t len) {
    auto next = free_.lower_bound(addr);
    if (next != free_.end() && addr + len == next->first) {
      len += next->second;
      next = free_.erase(next);
    }
    if (next != free_.begin()) {
      auto prev = std::prev(next);
      if (prev->first + prev->second == addr) {
        prev->second += len;
        return;
      }
    }
    free_[addr] = len;
  }

  std::uint64_t base_;
  std::vector<std::uint8_t> bytes_;
  std::uint64_t mask_ = ~std::uint64_t{0};
  std::map<std::uint64_t, std::uint64_t> free_;       // addr -> length
  std::map<std::uint64_t, Allocation> allocations_;   // base -> record
};

}  // namespace heapsafe
