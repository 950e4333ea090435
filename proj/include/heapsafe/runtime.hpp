#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "heapsafe/cost_model.hpp"
#include "heapsafe/engine.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/pointer.hpp"
#include "heapsafe/rocc.hpp"
#include "heapsafe/sim_heap.hpp"

namespace heapsafe {

/// How heap accesses are protected during a run.
///
///  - Baseline: no checks at all.
///  - SoftBounds: bounds and liveness checked in software on every access,
///    against a side table maintained by the allocator.
///  - HeapSafe: tagged pointers validated by the coprocessor; the access
///    stalls until the verdict arrives.
///  - HeapSafeNb: as HeapSafe, but validation verdicts are delivered as
///    deferred exceptions instead of stalling the access.
enum class RunMode : std::uint8_t { Baseline, SoftBounds, HeapSafe, HeapSafeNb };

constexpr const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Baseline: return "baseline";
    case RunMode::SoftBounds: return "softbc";
    case RunMode::HeapSafe: return "heapsafe";
    case RunMode::HeapSafeNb: return "heapsafe-nb";
  }
  return "?";
}

inline RunMode parse_run_mode(const std::string& name) {
  if (name == "baseline") return RunMode::Baseline;
  if (name == "softbc") return RunMode::SoftBounds;
  if (name == "heapsafe") return RunMode::HeapSafe;
  if (name == "heapsafe-nb") return RunMode::HeapSafeNb;
  throw ConfigParseError("unknown mode '" + name +
                         "' (expected baseline, softbc, heapsafe or heapsafe-nb)");
}

constexpr bool uses_engine(RunMode m) {
  return m == RunMode::HeapSafe || m == RunMode::HeapSafeNb;
}

constexpr ValidationMode validation_mode(RunMode m) {
  return m == RunMode::HeapSafeNb ? ValidationMode::NonBlocking
                                  : ValidationMode::Blocking;
}

struct RuntimeConfig {
  RunMode mode = RunMode::HeapSafe;
  bool tbi = false;  // pass tagged addresses through to memory, masked there
  std::uint64_t heap_base = 0x10000;
  std::uint64_t heap_size = std::uint64_t{1} << 20;
  unsigned hart_id = 0;
};

/// Allocation tags, handed out lowest-first and recycled on free. Tag 0 is
/// reserved for unprotected pointers and never drawn.
class TagPool {
 public:
  explicit TagPool(TagWidth w) {
    for (std::uint64_t t = 1; t <= w.max_tag(); ++t) free_.insert(free_.end(), t);
  }

  std::uint64_t draw() {
    if (free_.empty()) throw OutOfTags("all allocation tags are in use");
    const std::uint64_t t = *free_.begin();
    free_.erase(free_.begin());
    return t;
  }

  void give_back(std::uint64_t tag) { free_.insert(tag); }

  std::size_t available() const { return free_.size(); }

 private:
  std::set<std::uint64_t> free_;
};

/// What an allocation call hands back to the program. The pointer carries a
/// tag in protected modes and is the plain address otherwise; alloc_base is
/// the side-table key the software-checked mode consults on each access.
struct HeapHandle {
  SafePointer sp;
  std::uint64_t alloc_base = 0;
};

/// The allocator and access layer a program links against. One instance
/// owns the heap arena, the tag pool and the software side table, and
/// drives one coprocessor engine. The mode-specific families (safe_*,
/// softbc_*, baseline_*) are exposed for targeted tests; alloc/dealloc/
/// read/write/fill dispatch on the configured mode so the same program
/// runs unchanged in all four.
///
/// Allocation placement is identical in every mode: protection never moves
/// a block, so two runs that differ only in mode touch the same addresses.
class HeapRuntime {
 public:
  HeapRuntime(RuntimeConfig cfg, Engine& engine)
      : cfg_(cfg),
        engine_(engine),
        width_(engine.tag_width()),
        tags_(engine.tag_width()),
        heap_(cfg.heap_base, cfg.heap_size) {
    if (uses_engine(cfg_.mode) &&
        validation_mode(cfg_.mode) != engine_.mode())
      throw FieldOutOfRange("engine validation mode does not match run mode");
    if (cfg_.tbi) heap_.set_address_mask(width_.raw_mask());
  }

  void set_cost_recorder(CostRecorder* rec) { rec_ = rec; }

  // Mode-dispatching surface.

  HeapHandle alloc(std::uint64_t size) {
    switch (cfg_.mode) {
      case RunMode::Baseline: return baseline_malloc(size);
      case RunMode::SoftBounds: return softbc_malloc(size);
      default: {
        const SafePointer sp = safe_malloc(size);
        return HeapHandle{sp, raw_of(sp, width_)};
      }
    }
  }

  void dealloc(const HeapHandle& h) {
    switch (cfg_.mode) {
      case RunMode::Baseline: baseline_free(h.sp.bits); return;
      case RunMode::SoftBounds: softbc_free(h); return;
      default: safe_free(h.sp); return;
    }
  }

  std::uint8_t read(const HeapHandle& h, std::uint64_t off) {
    switch (cfg_.mode) {
      case RunMode::Baseline: return baseline_read(h.sp.bits + off);
      case RunMode::SoftBounds: return softbc_read(h, off);
      default:
        return safe_read(add_offset(h.sp, static_cast<std::int64_t>(off), width_));
    }
  }

  void write(const HeapHandle& h, std::uint64_t off, std::uint8_t v) {
    switch (cfg_.mode) {
      case RunMode::Baseline: baseline_write(h.sp.bits + off, v); return;
      case RunMode::SoftBounds: softbc_write(h, off, v); return;
      default:
        safe_write(add_offset(h.sp, static_cast<std::int64_t>(off), width_), v);
        return;
    }
  }

  void fill(const HeapHandle& h, std::uint64_t off, std::uint64_t len,
            std::uint8_t seed) {
    switch (cfg_.mode) {
      case RunMode::Baseline: baseline_fill(h.sp.bits + off, len, seed); return;
      case RunMode::SoftBounds: softbc_fill(h, off, len, seed); return;
      default: safe_fill(h.sp, off, len, seed); return;
    }
  }

  // Protected-mode family. Pointers are tagged; every access validates the
  // exact address it touches through the coprocessor. In blocking mode a
  // failed validation throws OutOfBoundsAccess before memory is touched;
  // in non-blocking mode the access proceeds and the failure is delivered
  // later through the engine's exception queue.

  SafePointer safe_malloc(std::uint64_t size) {
    note_plain(kAllocPlain);
    const std::uint64_t raw = heap_.alloc(size);
    std::uint64_t tag = 0;
    try {
      tag = tags_.draw();
    } catch (const OutOfTags&) {
      heap_.free(raw);
      throw;
    }
    note_plain(kTagDrawPlain);
    const SafePointer sp = make_safe(tag, raw, width_);

    EngineCommand cmd = build_hs_store(sp, size);
    cmd.hart_id = cfg_.hart_id;
    engine_.handle(cmd);
    note_store();
    if (engine_.last_store_status() != StoreStatus::Ok) {
      const StoreStatus st = engine_.last_store_status();
      heap_.free(raw);
      tags_.give_back(tag);
      if (st == StoreStatus::TableFull)
        throw OutOfMemory("metadata table full");
      throw Error(std::string("metadata store rejected: ") + to_string(st));
    }

    live_tag_[raw] = tag;
    return sp;
  }

  void safe_free(SafePointer sp) {
    note_plain(kFreePlain);
    const std::uint64_t tag = tag_of(sp, width_);
    if (tag == 0)
      throw UnprotectedPointer("free of an untagged pointer through the protected heap");
    const std::uint64_t raw = raw_of(sp, width_);

    auto it = live_tag_.find(raw);
    if (it == live_tag_.end()) {
      heap_.free(raw);  // resolves to ForeignPointer or DoubleFree
      throw Error("allocator and runtime disagree on live blocks");
    }
    if (it->second != tag)
      throw DoubleFree("stale pointer: this block was freed and reallocated");

    EngineCommand cmd = build_hs_free(sp);
    cmd.hart_id = cfg_.hart_id;
    engine_.handle(cmd);
    note_free_issue();

    heap_.free(raw);
    live_tag_.erase(it);
    tags_.give_back(tag);
    note_plain(kTagReturnPlain);
  }

  /// Unprotected (tag 0) pointers pass straight through to memory with no
  /// validation; anything else is checked at the exact accessed address.
  std::uint8_t safe_read(SafePointer sp) {
    if (is_protected(sp, width_)) validate_or_raise(sp);
    note_plain(kAccessPlain);
    return heap_.load(memory_address(sp));
  }

  void safe_write(SafePointer sp, std::uint8_t v) {
    if (is_protected(sp, width_)) validate_or_raise(sp);
    note_plain(kAccessPlain);
    heap_.store(memory_address(sp), v);
  }

  /// Copies n bytes to dst. Both destination endpoints are validated
  /// before the first byte is written, so a failing blocking check leaves
  /// the destination untouched. A copy demands a protected destination;
  /// single reads and writes are the only tag-0 pass-through.
  void safe_copy(SafePointer dst, const std::uint8_t* src, std::uint64_t n) {
    checked_burst(dst, n, [src](std::uint64_t i) { return src[i]; });
  }

  /// Copy variant whose source data is generated from `seed`; writes
  /// fill_byte(seed, i) for i in [0, len) starting at sp + off.
  void safe_fill(SafePointer sp, std::uint64_t off, std::uint64_t len,
                 std::uint8_t seed) {
    const SafePointer p = add_offset(sp, static_cast<std::int64_t>(off), width_);
    checked_burst(p, len, [seed](std::uint64_t i) { return fill_byte(seed, i); });
  }

  // Software-checked family. Untagged pointers; the allocator maintains a
  // side table of live extents keyed by allocation base, and every access
  // runs an inlined check against it.

  HeapHandle softbc_malloc(std::uint64_t size) {
    note_plain(kAllocPlain);
    const std::uint64_t raw = heap_.alloc(size);
    // The side table is capped like the tag space, so both protected
    // designs run out of metadata slots at the same point.
    if (side_table_.size() >= width_.max_tag()) {
      heap_.free(raw);
      throw OutOfTags("bounds side table full");
    }
    side_table_[raw] = size;
    note_plain(kSoftInsertPlain);
    return HeapHandle{SafePointer{raw}, raw};
  }

  void softbc_free(const HeapHandle& h) {
    note_plain(kFreePlain);
    heap_.free(h.alloc_base);  // throws on foreign or repeated frees
    side_table_.erase(h.alloc_base);
    note_plain(kSoftErasePlain);
  }

  std::uint8_t softbc_read(const HeapHandle& h, std::uint64_t off) {
    soft_check_or_raise(h, h.sp.bits + off);
    note_plain(kAccessPlain);
    return heap_.load(h.sp.bits + off);
  }

  void softbc_write(const HeapHandle& h, std::uint64_t off, std::uint8_t v) {
    soft_check_or_raise(h, h.sp.bits + off);
    note_plain(kAccessPlain);
    heap_.store(h.sp.bits + off, v);
  }

  void softbc_fill(const HeapHandle& h, std::uint64_t off, std::uint64_t len,
                   std::uint8_t seed) {
    note_plain(kCopyBase);
    if (len == 0) return;
    const std::uint64_t addr = h.sp.bits + off;
    soft_check_or_raise(h, addr);
    soft_check_or_raise(h, addr + len - 1);
    note_plain(fill_loop_plain(len));
    for (std::uint64_t i = 0; i < len; ++i)
      heap_.store(addr + i, fill_byte(seed, i));
  }

  // Unchecked family: plain addresses straight to memory.

  HeapHandle baseline_malloc(std::uint64_t size) {
    note_plain(kAllocPlain);
    const std::uint64_t raw = heap_.alloc(size);
    return HeapHandle{SafePointer{raw}, raw};
  }

  void baseline_free(std::uint64_t addr) {
    note_plain(kFreePlain);
    heap_.free(addr);
  }

  std::uint8_t baseline_read(std::uint64_t addr) {
    note_plain(kAccessPlain);
    return heap_.load(addr);
  }

  void baseline_write(std::uint64_t addr, std::uint8_t v) {
    note_plain(kAccessPlain);
    heap_.store(addr, v);
  }

  void baseline_fill(std::uint64_t addr, std::uint64_t len, std::uint8_t seed) {
    note_plain(kCopyBase);
    if (len == 0) return;
    note_plain(fill_loop_plain(len));
    for (std::uint64_t i = 0; i < len; ++i)
      heap_.store(addr + i, fill_byte(seed, i));
  }

  /// Deterministic data for modeled copies; depends only on (seed, i) so
  /// every mode writes identical bytes.
  static constexpr std::uint8_t fill_byte(std::uint8_t seed, std::uint64_t i) {
    return static_cast<std::uint8_t>(seed + i * 37);
  }

  const SimHeap& heap() const { return heap_; }
  SimHeap& heap() { return heap_; }
  Engine& engine() { return engine_; }
  TagWidth width() const { return width_; }
  const RuntimeConfig& config() const { return cfg_; }
  std::size_t tags_available() const { return tags_.available(); }

 private:
  /// Endpoint-validated write burst: the first and last destination bytes
  /// are validated before anything is written, which suffices while
  /// allocations are contiguous. Blocking mode therefore aborts with the
  /// destination untouched; non-blocking mode writes and lets the engine
  /// queue the violation.
  template <typename ByteAt>
  void checked_burst(SafePointer start, std::uint64_t len, ByteAt byte_at) {
    note_plain(kCopyBase);
    if (!is_protected(start, width_))
      throw UnprotectedPointer("copy through an untagged pointer");
    if (len == 0) return;
    const SafePointer last =
        add_offset(start, static_cast<std::int64_t>(len - 1), width_);
    validate_or_raise(start);
    validate_or_raise(last);
    note_plain(fill_loop_plain(len));
    const std::uint64_t addr = memory_address(start);
    for (std::uint64_t i = 0; i < len; ++i) heap_.store(addr + i, byte_at(i));
  }

  /// Issues a validation command for `p`. Blocking mode turns a failed
  /// verdict into OutOfBoundsAccess here; non-blocking mode lets the
  /// engine queue the failure and returns immediately.
  void validate_or_raise(SafePointer p) {
    EngineCommand cmd = build_hs_validate(p);
    cmd.hart_id = cfg_.hart_id;
    const auto resp = engine_.handle(cmd);
    if (cfg_.mode == RunMode::HeapSafeNb) {
      note_nb_validate();
      return;
    }
    note_blocking_validate();
    if (resp && resp->data != 0)
      throw OutOfBoundsAccess("pointer failed validation");
  }

  void soft_check_or_raise(const HeapHandle& h, std::uint64_t addr) {
    note_soft_check();
    auto it = side_table_.find(h.alloc_base);
    if (it == side_table_.end())
      throw OutOfBoundsAccess("access through pointer to freed block");
    if (addr < it->first || addr >= it->first + it->second)
      throw OutOfBoundsAccess("access outside allocation bounds");
  }

  /// Address handed to the memory system. With top-byte-ignore the tagged
  /// bits go through unchanged and memory masks them; otherwise the tag is
  /// stripped here.
  std::uint64_t memory_address(SafePointer p) const {
    return cfg_.tbi ? p.bits : raw_of(p, width_);
  }

  void note_plain(std::uint64_t n) { if (rec_) rec_->plain(n); }
  void note_soft_check() { if (rec_) rec_->soft_check(); }
  void note_blocking_validate() { if (rec_) rec_->validate_blocking(); }
  void note_nb_validate() { if (rec_) rec_->validate_nb(); }
  void note_store() { if (rec_) rec_->store_issue(); }
  void note_free_issue() { if (rec_) rec_->free_issue(); }

  RuntimeConfig cfg_;
  Engine& engine_;
  TagWidth width_;
  TagPool tags_;
  SimHeap heap_;
  std::map<std::uint64_t, std::uint64_t> live_tag_;    // base -> tag
  std::map<std::uint64_t, std::uint64_t> side_table_;  // base -> size
  CostRecorder* rec_ = nullptr;
};

}  // namespace heapsafe
