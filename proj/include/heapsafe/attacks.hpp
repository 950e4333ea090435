#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heapsafe/engine.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/runtime.hpp"
#include "heapsafe/workload.hpp"

namespace heapsafe {

/// Outcome of one attack replay. `detected` means the protection flagged
/// the attack at any point; the remaining fields describe the damage that
/// went through anyway.
struct AttackReport {
  std::string name;
  RunMode mode = RunMode::Baseline;
  bool detected = false;
  std::uint64_t corrupted_bytes = 0;   // victim bytes altered by the attack
  bool leaked = false;                 // a dangling read returned real data
  std::uint64_t violation_offset = 0;  // first out-of-bounds byte offset
  std::uint64_t detection_latency = 0; // ops between fault and delivery
  bool reuse_probe_flagged = false;    // see attack_cwe416
  bool realloc_same_base = false;
  std::vector<std::string> log;
};

namespace detail {

struct AttackRig {
  Engine engine;
  HeapRuntime rt;

  AttackRig(RunMode mode, const BenchConfig& bench)
      : engine(EngineConfig{bench.mt_size, validation_mode(mode),
                            bench.hart_id, bench.require_machine_mode}),
        rt(RuntimeConfig{mode, bench.tbi, bench.heap_base, bench.heap_size,
                         bench.hart_id},
           engine) {}
};

/// Runs `body` and reports whether a bounds check rejected it.
template <typename F>
bool flagged(F&& body) {
  try {
    body();
    return false;
  } catch (const OutOfBoundsAccess&) {
    return true;
  }
}

}  // namespace detail

/// Heap buffer overflow: an 80-byte write into a 64-byte block, with the
/// 64-byte victim block sitting right behind it.
///
/// A stalling check rejects the write before a single byte lands. The
/// deferred mode lets the bytes land and reports the violation at the
/// next drain. Software checks reject it like the stalling mode. The
/// unprotected baseline corrupts the victim silently.
inline AttackReport attack_cwe122(RunMode mode, const BenchConfig& bench) {
  detail::AttackRig rig(mode, bench);
  HeapRuntime& rt = rig.rt;

  AttackReport rep;
  rep.name = "cwe122";
  rep.mode = mode;

  const HeapHandle dst = rt.alloc(64);
  const HeapHandle victim = rt.alloc(64);
  rep.violation_offset = 64;  // first byte past dst's extent
  rep.log.push_back("dst = alloc(64), victim = alloc(64), adjacent blocks");

  rt.fill(victim, 0, 64, 0xCC);
  const std::uint64_t victim_base = victim.alloc_base;
  std::vector<std::uint8_t> before(64);
  for (std::uint64_t i = 0; i < 64; ++i)
    before[i] = rt.heap().load(victim_base + i);

  const bool rejected = detail::flagged([&] { rt.fill(dst, 0, 80, 0xEE); });
  rep.log.push_back(rejected ? "80-byte write into dst rejected"
                             : "80-byte write into dst went through");

  if (mode == RunMode::HeapSafeNb) {
    // Two unrelated operations pass before the queue is drained.
    rt.read(victim, 0);
    rt.read(victim, 1);
    const auto exns = rig.engine.drain_exceptions();
    if (!exns.empty()) {
      rep.detected = true;
      rep.detection_latency = 2;
      rep.log.push_back("violation delivered at drain, 2 ops after the write");
    }
  } else {
    rep.detected = rejected;
  }

  for (std::uint64_t i = 0; i < 64; ++i)
    if (rt.heap().load(victim_base + i) != before[i]) ++rep.corrupted_bytes;
  rep.log.push_back(std::to_string(rep.corrupted_bytes) +
                    " victim bytes corrupted");
  return rep;
}

/// Use after free: a pointer is kept across free and reuse of its block.
///
/// Replay: p1 = alloc(64) is filled and freed (a 32-byte spacer keeps its
/// hole from merging into the wilderness). The first dangling read hits
/// the freed block. A 128-byte decoy allocation then takes over p1's
/// recycled identity without fitting its hole, and p2 = alloc(64) lands at
/// p1's old address. The second dangling read through p1 now aliases p2's
/// live data: the baseline leaks it silently, while tagged validation
/// rejects both reads.
///
/// The report also carries the outcome of a separate probe: free a block
/// and immediately reallocate the same size, so the recycled identity maps
/// to the same extent. Reads through the stale pointer are then
/// indistinguishable from valid ones and no mode flags them; the probe
/// documents that blind spot.
inline AttackReport attack_cwe416(RunMode mode, const BenchConfig& bench) {
  detail::AttackRig rig(mode, bench);
  HeapRuntime& rt = rig.rt;

  AttackReport rep;
  rep.name = "cwe416";
  rep.mode = mode;

  const HeapHandle p1 = rt.alloc(64);
  rt.alloc(32);  // spacer pins the hole left by p1
  rt.fill(p1, 0, 64, 0xA1);
  const std::uint8_t stale_expected = HeapRuntime::fill_byte(0xA1, 0);
  rt.dealloc(p1);
  rep.log.push_back("p1 = alloc(64) filled and freed; spacer alloc(32) held");

  bool first_flagged = detail::flagged([&] {
    const std::uint8_t v = rt.read(p1, 0);
    if (v == stale_expected) rep.leaked = true;
  });
  rep.log.push_back(first_flagged ? "read of freed p1 rejected"
                                  : "read of freed p1 went through");

  const HeapHandle decoy = rt.alloc(128);  // adopts p1's recycled identity
  const HeapHandle p2 = rt.alloc(64);      // first fit: lands at p1's base
  rep.realloc_same_base = p2.alloc_base == p1.alloc_base;
  rt.fill(p2, 0, 64, 0xB2);
  rep.log.push_back("decoy = alloc(128), p2 = alloc(64) reuses p1's address");

  bool second_flagged = detail::flagged([&] {
    const std::uint8_t v = rt.read(p1, 0);
    if (v == HeapRuntime::fill_byte(0xB2, 0)) rep.leaked = true;
  });
  rep.log.push_back(second_flagged
                        ? "read of p2's data through stale p1 rejected"
                        : "read of p2's data through stale p1 went through");
  (void)decoy;

  if (mode == RunMode::HeapSafeNb) {
    const auto exns = rig.engine.drain_exceptions();
    if (!exns.empty()) {
      rep.detected = true;
      // Four operations ran between the first dangling read and this
      // drain: two allocations, the fill of p2, and the second read.
      rep.detection_latency = 4;
      rep.log.push_back(std::to_string(exns.size()) +
                        " violations delivered at drain");
    }
  } else {
    rep.detected = first_flagged || second_flagged;
  }

  // Immediate same-size reuse probe, on a fresh rig so state is clean.
  detail::AttackRig probe(mode, bench);
  const HeapHandle pa = probe.rt.alloc(64);
  probe.rt.fill(pa, 0, 64, 0x11);
  probe.rt.dealloc(pa);
  const HeapHandle pb = probe.rt.alloc(64);
  (void)pb;
  bool probe_flagged = detail::flagged([&] { probe.rt.read(pa, 0); });
  if (mode == RunMode::HeapSafeNb)
    probe_flagged = !probe.engine.drain_exceptions().empty();
  rep.reuse_probe_flagged = probe_flagged;
  rep.log.push_back(probe_flagged
                        ? "same-size immediate reuse probe flagged"
                        : "same-size immediate reuse probe not flagged "
                          "(recycled identity aliases the new block)");
  return rep;
}

inline AttackReport run_attack(const std::string& name, RunMode mode,
                               const BenchConfig& bench) {
  if (name == "cwe122") return attack_cwe122(mode, bench);
  if (name == "cwe416") return attack_cwe416(mode, bench);
  throw ConfigParseError("unknown attack '" + name +
                         "' (expected cwe122 or cwe416)");
}

}  // namespace heapsafe
