#include "heapsafe/runtime.hpp"

#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "heapsafe/cost_model.hpp"
#include "heapsafe/engine.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/pointer.hpp"
#include "heapsafe/sim_heap.hpp"

namespace heapsafe {
namespace {

constexpr std::uint64_t kBase = 0x10000;

TEST(SimHeap, AdjacentAllocationsAndFirstFitReuse) {
  SimHeap heap(kBase, 4096);
  const std::uint64_t a = heap.alloc(64);
  const std::uint64_t b = heap.alloc(32);
  const std::uint64_t c = heap.alloc(64);
  EXPECT_EQ(a, kBase);
  EXPECT_EQ(b, kBase + 64);   // no headers, no padding
  EXPECT_EQ(c, kBase + 96);

  heap.free(a);
  EXPECT_FALSE(heap.is_live(a));
  EXPECT_EQ(heap.alloc(64), a);  // lowest fitting hole wins

  heap.free(b);
  EXPECT_EQ(heap.alloc(16), b);  // splits the 32-byte hole
  EXPECT_EQ(heap.alloc(16), b + 16);
}

TEST(SimHeap, CoalescesNeighbouringHoles) {
  SimHeap heap(kBase, 256);
  const std::uint64_t a = heap.alloc(64);
  const std::uint64_t b = heap.alloc(64);
  const std::uint64_t c = heap.alloc(64);
  const std::uint64_t d = heap.alloc(64);  // arena now full
  heap.free(b);
  heap.free(a);                   // a's end touches b's hole: merge forward
  EXPECT_EQ(heap.alloc(128), a);  // fits only if the holes coalesced
  heap.free(c);
  heap.free(d);                   // d's start touches c's hole: merge backward
  EXPECT_EQ(heap.alloc(128), c);
  EXPECT_EQ(heap.live_count(), 2u);
}

TEST(SimHeap, FreeErrors) {
  SimHeap heap(kBase, 256);
  const std::uint64_t a = heap.alloc(64);
  EXPECT_THROW(heap.free(a + 1), ForeignPointer);
  EXPECT_THROW(heap.free(0x9999), ForeignPointer);
  heap.free(a);
  EXPECT_THROW(heap.free(a), DoubleFree);
}

TEST(SimHeap, AllocationErrors) {
  SimHeap heap(kBase, 128);
  EXPECT_THROW(heap.alloc(0), ZeroSize);
  EXPECT_THROW(heap.alloc(129), OutOfMemory);
  heap.alloc(64);
  EXPECT_THROW(heap.alloc(65), OutOfMemory);  // 64 left
  EXPECT_THROW(SimHeap(kBase, 0), ZeroSize);
}

TEST(SimHeap, DataAccessIsArenaChecked) {
  SimHeap heap(kBase, 128);
  heap.store(kBase + 5, 0xAB);
  EXPECT_EQ(heap.load(kBase + 5), 0xAB);
  EXPECT_THROW(heap.load(kBase - 1), InvalidAddress);
  EXPECT_THROW(heap.load(kBase + 128), InvalidAddress);
  EXPECT_THROW(heap.store(0, 1), InvalidAddress);
  EXPECT_EQ(heap.snapshot().size(), 128u);
  EXPECT_EQ(heap.allocation_size(kBase), 0u);
}

TEST(SimHeap, AddressMaskStripsHighBits) {
  SimHeap heap(kBase, 128);
  const TagWidth w(8);
  heap.set_address_mask(w.raw_mask());
  const std::uint64_t tagged = make_safe(0x7F, kBase + 9, w).bits;
  heap.store(tagged, 0x5C);               // tag bits ignored by memory
  EXPECT_EQ(heap.load(kBase + 9), 0x5C);  // plain address sees the byte
}

TEST(CostModel, RejectsDegenerateWeights) {
  CostModel m;
  EXPECT_NO_THROW(m.validate());
  m.plain_instr = 0;
  EXPECT_THROW(m.validate(), FieldOutOfRange);
  m = CostModel{};
  m.nb_issue = m.blocking_validate_stall + 1;
  EXPECT_THROW(m.validate(), FieldOutOfRange);
}

TEST(CostModel, RecorderAccountsInstructionsAndCycles) {
  CostRecorder rec{CostModel{}};
  rec.plain(4);             // 4 instructions, 4 cycles
  rec.validate_blocking();  // 1 instruction, 4 cycles
  rec.soft_check();         // 8 instructions, 8 cycles
  rec.validate_nb();        // 1 instruction, 1 cycle
  rec.store_issue();        // 1 instruction, 1 cycle
  rec.free_issue();         // 1 instruction, 1 cycle
  EXPECT_EQ(rec.instructions(), 16u);
  EXPECT_EQ(rec.cycles(), 19u);
  EXPECT_EQ(rec.blocking_validate_events(), 1u);
  EXPECT_EQ(rec.nb_validate_events(), 1u);
  EXPECT_EQ(rec.soft_check_events(), 1u);

  const RunMetrics m = finalize(rec);
  EXPECT_EQ(m.total_cycles, 19u);
  EXPECT_EQ(m.instruction_count, 16u);
  EXPECT_DOUBLE_EQ(m.ipc, 16.0 / 19.0);
}

TEST(CostModel, CopyLoopIsWordGranular) {
  EXPECT_EQ(fill_loop_plain(1), 1u);
  EXPECT_EQ(fill_loop_plain(8), 1u);
  EXPECT_EQ(fill_loop_plain(9), 2u);
  EXPECT_EQ(fill_loop_plain(24), 3u);
}

TEST(TagPool, DrawsLowestFirstAndRecycles) {
  TagPool pool{TagWidth(8)};
  EXPECT_EQ(pool.available(), 255u);
  EXPECT_EQ(pool.draw(), 1u);
  EXPECT_EQ(pool.draw(), 2u);
  EXPECT_EQ(pool.draw(), 3u);
  pool.give_back(2);
  EXPECT_EQ(pool.draw(), 2u);
}

TEST(TagPool, ExhaustsAtTagCountMinusOne) {
  TagPool pool{TagWidth(4)};
  for (std::uint64_t t = 1; t <= 15; ++t) EXPECT_EQ(pool.draw(), t);
  EXPECT_THROW(pool.draw(), OutOfTags);
}

TEST(RunModeNames, RoundtripAndReject) {
  for (RunMode m : {RunMode::Baseline, RunMode::SoftBounds, RunMode::HeapSafe,
                    RunMode::HeapSafeNb})
    EXPECT_EQ(parse_run_mode(to_string(m)), m);
  EXPECT_THROW(parse_run_mode("fast"), ConfigParseError);
  EXPECT_FALSE(uses_engine(RunMode::Baseline));
  EXPECT_FALSE(uses_engine(RunMode::SoftBounds));
  EXPECT_TRUE(uses_engine(RunMode::HeapSafe));
  EXPECT_TRUE(uses_engine(RunMode::HeapSafeNb));
  EXPECT_EQ(validation_mode(RunMode::HeapSafe), ValidationMode::Blocking);
  EXPECT_EQ(validation_mode(RunMode::HeapSafeNb), ValidationMode::NonBlocking);
}

struct Rig {
  Engine engine;
  HeapRuntime rt;

  explicit Rig(RunMode mode, std::uint64_t mt_size = 256,
               std::uint64_t heap_size = std::uint64_t{1} << 20,
               bool tbi = false)
      : engine(EngineConfig{mt_size, validation_mode(mode), 0, false}),
        rt(RuntimeConfig{mode, tbi, kBase, heap_size, 0}, engine) {}
};

TEST(ProtectedHeap, FirstAllocationTagsAndRegistersTheBlock) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(0x40);
  EXPECT_EQ(h.alloc_base, kBase);
  EXPECT_EQ(tag_of(h.sp, rig.rt.width()), 1u);
  EXPECT_EQ(raw_of(h.sp, rig.rt.width()), kBase);

  const MetadataRow* row = rig.engine.table().find(1);
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->base, kBase);
  EXPECT_EQ(row->bound, kBase + 0x40);

  const HeapHandle h2 = rig.rt.alloc(0x10);
  EXPECT_EQ(tag_of(h2.sp, rig.rt.width()), 2u);
}

TEST(ProtectedHeap, FreeRecyclesTheTag) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(0x40);
  rig.rt.dealloc(h);
  EXPECT_EQ(rig.engine.table().occupancy(), 0u);
  const HeapHandle h2 = rig.rt.alloc(0x40);
  EXPECT_EQ(tag_of(h2.sp, rig.rt.width()), 1u);  // lowest free tag again
  EXPECT_EQ(h2.alloc_base, kBase);               // first-fit reuses the hole
}

TEST(ProtectedHeap, EveryTagUsableThenOutOfTags) {
  Rig rig(RunMode::HeapSafe);
  std::vector<HeapHandle> held;
  for (std::uint64_t i = 1; i <= 255; ++i) {
    held.push_back(rig.rt.alloc(16));
    EXPECT_EQ(tag_of(held.back().sp, rig.rt.width()), i);
  }
  EXPECT_THROW(rig.rt.alloc(16), OutOfTags);
  // The failed allocation rolled back cleanly.
  EXPECT_EQ(rig.rt.heap().live_count(), 255u);
  EXPECT_EQ(rig.engine.table().occupancy(), 255u);
  EXPECT_EQ(rig.rt.tags_available(), 0u);

  rig.rt.dealloc(held[10]);
  EXPECT_NO_THROW(rig.rt.alloc(16));
}

TEST(ProtectedHeap, FreeErrorTaxonomy) {
  Rig rig(RunMode::HeapSafe);
  const TagWidth w = rig.rt.width();

  // Untagged pointer.
  EXPECT_THROW(rig.rt.safe_free(SafePointer{kBase}), UnprotectedPointer);

  // Pointer that was never an allocation.
  EXPECT_THROW(rig.rt.safe_free(make_safe(9, kBase + 0x500, w)), ForeignPointer);

  // Plain double free.
  const HeapHandle h = rig.rt.alloc(0x20);
  rig.rt.dealloc(h);
  EXPECT_THROW(rig.rt.dealloc(h), DoubleFree);
}

TEST(ProtectedHeap, StaleAliasFreeIsCaughtByTagMismatch) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle a = rig.rt.alloc(16);   // tag 1 at kBase
  rig.rt.alloc(16);                        // tag 2, pins the next block
  rig.rt.dealloc(a);                       // tag 1 free, hole at kBase
  rig.rt.alloc(32);                        // tag 1 again, but placed after b
  const HeapHandle d = rig.rt.alloc(16);   // tag 3 lands in the kBase hole
  EXPECT_EQ(d.alloc_base, kBase);
  EXPECT_EQ(tag_of(d.sp, rig.rt.width()), 3u);
  // Freeing through the stale alias of the original block is refused.
  EXPECT_THROW(rig.rt.safe_free(a.sp), DoubleFree);
  EXPECT_TRUE(rig.rt.heap().is_live(kBase));
}

TEST(ProtectedHeap, WriteThenReadRoundtrip) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(0x20);
  for (std::uint64_t off = 0; off < 0x20; ++off)
    rig.rt.write(h, off, static_cast<std::uint8_t>(off * 3 + 1));
  for (std::uint64_t off = 0; off < 0x20; ++off)
    EXPECT_EQ(rig.rt.read(h, off), static_cast<std::uint8_t>(off * 3 + 1));
}

TEST(ProtectedHeap, BlockingAccessFailsAtExactBounds) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(0x20);
  EXPECT_NO_THROW(rig.rt.read(h, 0x1F));
  EXPECT_THROW(rig.rt.read(h, 0x20), OutOfBoundsAccess);
  EXPECT_THROW(rig.rt.write(h, 0x20, 1), OutOfBoundsAccess);
  // One below the base, reached by offsetting the tagged pointer.
  const SafePointer below = add_offset(h.sp, -1, rig.rt.width());
  EXPECT_THROW(rig.rt.safe_read(below), OutOfBoundsAccess);
}

TEST(ProtectedHeap, UseAfterFreeIsCaught) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(0x20);
  rig.rt.write(h, 0, 0x77);
  rig.rt.dealloc(h);
  EXPECT_THROW(rig.rt.safe_read(h.sp), OutOfBoundsAccess);
  EXPECT_THROW(rig.rt.safe_write(h.sp, 0), OutOfBoundsAccess);
}

TEST(ProtectedHeap, CopyChecksBothEndpointsBeforeWriting) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(8);
  const std::uint8_t src[9] = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  rig.rt.safe_copy(h.sp, src, 8);  // exact fit
  for (std::uint64_t i = 0; i < 8; ++i) EXPECT_EQ(rig.rt.read(h, i), src[i]);

  // One byte too long: rejected up front, destination untouched.
  EXPECT_THROW(rig.rt.safe_copy(h.sp, src, 9), OutOfBoundsAccess);
  for (std::uint64_t i = 0; i < 8; ++i) EXPECT_EQ(rig.rt.read(h, i), src[i]);

  EXPECT_NO_THROW(rig.rt.safe_copy(h.sp, nullptr, 0));  // empty copy
  EXPECT_THROW(rig.rt.safe_copy(SafePointer{kBase}, src, 4), UnprotectedPointer);
}

TEST(ProtectedHeap, FillChecksBothEndpointsBeforeWriting) {
  Rig rig(RunMode::HeapSafe);
  const HeapHandle h = rig.rt.alloc(16);
  rig.rt.fill(h, 4, 12, 0x10);  // exactly to the end
  EXPECT_EQ(rig.rt.read(h, 4), HeapRuntime::fill_byte(0x10, 0));
  EXPECT_EQ(rig.rt.read(h, 15), HeapRuntime::fill_byte(0x10, 11));

  rig.rt.write(h, 0, 0xEE);
  EXPECT_THROW(rig.rt.fill(h, 0, 17, 0x20), OutOfBoundsAccess);
  EXPECT_EQ(rig.rt.read(h, 0), 0xEE);  // nothing was written
}

TEST(ProtectedHeap, UntaggedReadsAndWritesPassThroughUnvalidated) {
  Rig rig(RunMode::HeapSafe);
  CostRecorder rec{CostModel{}};
  rig.rt.set_cost_recorder(&rec);
  rig.rt.alloc(0x20);

  const SafePointer plain{kBase + 4};  // tag 0, inside the live block
  const auto validations_before = rec.blocking_validate_events();
  rig.rt.safe_write(plain, 0x3D);
  EXPECT_EQ(rig.rt.safe_read(plain), 0x3D);
  EXPECT_EQ(rec.blocking_validate_events(), validations_before);

  // But bulk copies insist on a protected destination.
  const std::uint8_t b = 0;
  EXPECT_THROW(rig.rt.safe_copy(plain, &b, 1), UnprotectedPointer);
}

TEST(ProtectedHeap, NonBlockingModeDefersViolations) {
  Rig rig(RunMode::HeapSafeNb);
  const HeapHandle h = rig.rt.alloc(0x20);

  // In-bounds traffic raises nothing.
  rig.rt.write(h, 3, 0x44);
  EXPECT_EQ(rig.rt.read(h, 3), 0x44);
  EXPECT_EQ(rig.engine.pending_exceptions(), 0u);

  // The out-of-bounds write is not stopped: the byte lands in memory and
  // the violation sits in the queue until drained.
  EXPECT_NO_THROW(rig.rt.write(h, 0x20, 0x99));
  EXPECT_EQ(rig.rt.heap().load(kBase + 0x20), 0x99);
  ASSERT_EQ(rig.engine.pending_exceptions(), 1u);
  const auto exns = rig.engine.drain_exceptions();
  EXPECT_EQ(exns[0].offending_word,
            add_offset(h.sp, 0x20, rig.rt.width()).bits);
}

TEST(ProtectedHeap, RunModeAndEngineModeMustAgree) {
  Engine nb(EngineConfig{256, ValidationMode::NonBlocking, 0, false});
  EXPECT_THROW(
      HeapRuntime(RuntimeConfig{RunMode::HeapSafe, false, kBase, 4096, 0}, nb),
      FieldOutOfRange);
  Engine blocking(EngineConfig{256, ValidationMode::Blocking, 0, false});
  EXPECT_THROW(HeapRuntime(
                   RuntimeConfig{RunMode::HeapSafeNb, false, kBase, 4096, 0},
                   blocking),
               FieldOutOfRange);
}

TEST(ProtectedHeap, TopByteIgnoreLeavesBehaviorUnchanged) {
  Rig plain(RunMode::HeapSafe, 256, 4096, /*tbi=*/false);
  Rig tbi(RunMode::HeapSafe, 256, 4096, /*tbi=*/true);

  for (Rig* rig : {&plain, &tbi}) {
    const HeapHandle h = rig->rt.alloc(0x30);
    rig->rt.fill(h, 0, 0x30, 0x42);
    const HeapHandle g = rig->rt.alloc(0x10);
    rig->rt.write(g, 5, 0xAA);
    rig->rt.dealloc(h);
    EXPECT_THROW(rig->rt.safe_read(h.sp), OutOfBoundsAccess);
    EXPECT_THROW(rig->rt.read(g, 0x10), OutOfBoundsAccess);
    EXPECT_EQ(rig->rt.read(g, 5), 0xAA);
  }
  EXPECT_EQ(plain.rt.heap().snapshot(), tbi.rt.heap().snapshot());
}

TEST(SoftBounds, AllocAccessFreeLifecycle) {
  Rig rig(RunMode::SoftBounds);
  const HeapHandle h = rig.rt.alloc(0x20);
  EXPECT_EQ(h.alloc_base, kBase);
  EXPECT_FALSE(is_protected(h.sp, rig.rt.width()));  // pointers stay untagged

  rig.rt.write(h, 7, 0x12);
  EXPECT_EQ(rig.rt.read(h, 7), 0x12);
  EXPECT_NO_THROW(rig.rt.read(h, 0x1F));
  EXPECT_THROW(rig.rt.read(h, 0x20), OutOfBoundsAccess);
  EXPECT_THROW(rig.rt.fill(h, 0x10, 0x11, 1), OutOfBoundsAccess);

  rig.rt.dealloc(h);
  EXPECT_THROW(rig.rt.read(h, 0), OutOfBoundsAccess);  // freed block
  EXPECT_THROW(rig.rt.dealloc(h), DoubleFree);
}

TEST(SoftBounds, SideTableSharesTheTagCapacity) {
  Rig rig(RunMode::SoftBounds);
  std::vector<HeapHandle> held;
  for (int i = 0; i < 255; ++i) held.push_back(rig.rt.alloc(16));
  EXPECT_THROW(rig.rt.alloc(16), OutOfTags);
  EXPECT_EQ(rig.rt.heap().live_count(), 255u);  // failed alloc rolled back
  rig.rt.dealloc(held[0]);
  EXPECT_NO_THROW(rig.rt.alloc(16));
}

// On accesses through live handles, the software-checked and
// coprocessor-checked modes must reach identical verdicts.
TEST(SoftBounds, VerdictsMatchProtectedModeOnFuzzedTraces) {
  Rig hs(RunMode::HeapSafe);
  Rig sb(RunMode::SoftBounds);
  std::mt19937_64 rng(555);

  struct Slot {
    HeapHandle hs_h, sb_h;
    std::uint64_t size = 0;
    bool live = false;
  };
  std::vector<Slot> slots(6);

  for (int i = 0; i < 20000; ++i) {
    Slot& s = slots[rng() % slots.size()];
    const std::uint64_t action = rng() % 6;
    if (!s.live) {
      const std::uint64_t size = 8 + rng() % 24;
      s.hs_h = hs.rt.alloc(size);
      s.sb_h = sb.rt.alloc(size);
      s.size = size;
      s.live = true;
      continue;
    }
    if (action == 0) {
      hs.rt.dealloc(s.hs_h);
      sb.rt.dealloc(s.sb_h);
      s.live = false;
      continue;
    }
    const std::uint64_t off = rng() % (s.size + 4);  // sometimes past the end
    bool hs_threw = false, sb_threw = false;
    try {
      if (action % 2 == 0)
        hs.rt.read(s.hs_h, off);
      else
        hs.rt.write(s.hs_h, off, static_cast<std::uint8_t>(i));
    } catch (const OutOfBoundsAccess&) {
      hs_threw = true;
    }
    try {
      if (action % 2 == 0)
        sb.rt.read(s.sb_h, off);
      else
        sb.rt.write(s.sb_h, off, static_cast<std::uint8_t>(i));
    } catch (const OutOfBoundsAccess&) {
      sb_threw = true;
    }
    ASSERT_EQ(hs_threw, sb_threw) << "op " << i << " off " << off
                                  << " size " << s.size;
    ASSERT_EQ(hs_threw, off >= s.size);
  }
}

// A violation-free program must leave byte-identical memory behind in all
// four modes: protection may only change timing, never data.
TEST(Transparency, AllModesProduceIdenticalMemory) {
  const RunMode modes[] = {RunMode::Baseline, RunMode::SoftBounds,
                           RunMode::HeapSafe, RunMode::HeapSafeNb};
  std::vector<std::vector<std::uint8_t>> snapshots;

  for (const RunMode mode : modes) {
    Rig rig(mode, 256, 1 << 14);
    std::mt19937_64 rng(77);  // same program in every mode
    struct Slot {
      HeapHandle h;
      std::uint64_t size = 0;
      bool live = false;
    };
    std::vector<Slot> slots(4);
    for (int i = 0; i < 400; ++i) {
      Slot& s = slots[rng() % slots.size()];
      const std::uint64_t action = rng() % 5;
      const std::uint64_t size_draw = 8 + rng() % 24;
      const std::uint64_t fill_draw = rng();
      if (!s.live) {
        s.h = rig.rt.alloc(size_draw);
        s.size = size_draw;
        s.live = true;
      } else if (action == 0) {
        rig.rt.dealloc(s.h);
        s.live = false;
      } else if (action == 1) {
        rig.rt.write(s.h, fill_draw % s.size, static_cast<std::uint8_t>(i));
      } else if (action == 2) {
        rig.rt.read(s.h, fill_draw % s.size);
      } else {
        const std::uint64_t off = fill_draw % s.size;
        rig.rt.fill(s.h, off, s.size - off, static_cast<std::uint8_t>(i));
      }
    }
    if (mode == RunMode::HeapSafeNb)
      EXPECT_TRUE(rig.engine.drain_exceptions().empty());
    snapshots.push_back(rig.rt.heap().snapshot());
  }

  for (std::size_t i = 1; i < snapshots.size(); ++i)
    EXPECT_EQ(snapshots[i], snapshots[0]) << "mode " << to_string(modes[i]);
}

}  // namespace
}  // namespace heapsafe
