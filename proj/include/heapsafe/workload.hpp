#pragma once

#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "heapsafe/cost_model.hpp"
#include "heapsafe/engine.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/runtime.hpp"

namespace heapsafe {

/// Shape of a synthetic allocation-heavy workload. heap_fraction steers
/// each operation to the heap or to a modeled stack arena; buffer sizes
/// are drawn uniformly from [buffer_min, buffer_max].
struct WorkloadSpec {
  std::uint64_t total_ops = 2000;
  double heap_fraction = 0.75;
  std::uint32_t heap_slots = 8;
  std::uint32_t stack_slots = 8;
  std::uint64_t buffer_min = 8;
  std::uint64_t buffer_max = 24;
  std::uint64_t inject_violations = 0;
  std::uint64_t seed = 1;
};

enum class OpKind : std::uint8_t {
  HeapAlloc,
  HeapFree,
  HeapRead,
  HeapWrite,
  HeapFill,
  StackAlloc,
  StackFree,
  StackRead,
  StackWrite,
  StackFill,
};

/// One pre-resolved operation. Offsets and lengths are relative to the
/// slot's buffer; a violating fill runs past the end of it on purpose.
struct TraceOp {
  OpKind kind = OpKind::HeapAlloc;
  std::uint32_t slot = 0;
  std::uint64_t size = 0;  // alloc requests
  std::uint64_t off = 0;
  std::uint64_t len = 0;   // fill ops
  std::uint8_t fill = 0;
  bool violation = false;
};

struct Trace {
  WorkloadSpec spec;
  std::vector<TraceOp> ops;
  std::uint64_t violation_count = 0;
};

/// Builds the operation sequence for `spec`. The sequence is a pure
/// function of the spec: replaying it in any protection mode performs the
/// same allocations, frees and accesses in the same order.
///
/// Each operation consumes a fixed number of draws from the master
/// generator, and the heap-or-stack choice compares one of them against
/// heap_fraction. Raising the fraction therefore turns stack operations
/// into heap operations while every other decision stays put, so traces
/// at different fractions are directly comparable.
///
/// Injected violations come from a second generator so they leave the
/// master stream untouched. Injection picks target indices up front and
/// converts the first eligible operation at or after each target into an
/// over-length fill on a live slot.
inline Trace generate(const WorkloadSpec& spec) {
  if (spec.heap_fraction < 0.0 || spec.heap_fraction > 1.0)
    throw FieldOutOfRange("heap fraction must lie in [0, 1]");
  if (spec.buffer_min == 0 || spec.buffer_max < spec.buffer_min)
    throw FieldOutOfRange("buffer size range is empty");
  if (spec.heap_slots == 0 || spec.stack_slots == 0)
    throw FieldOutOfRange("slot counts must be positive");

  std::mt19937_64 rng(spec.seed);
  std::mt19937_64 vrng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  // Injection targets, chosen before generation starts.
  std::set<std::uint64_t> targets;
  if (spec.inject_violations > 0) {
    if (spec.inject_violations > spec.total_ops)
      throw FieldOutOfRange("more injected violations than operations");
    const std::uint64_t lo = spec.total_ops / 5;  // let slots warm up first
    while (targets.size() < spec.inject_violations)
      targets.insert(lo + vrng() % (spec.total_ops - lo));
  }

  Trace trace;
  trace.spec = spec;
  trace.ops.reserve(spec.total_ops);

  std::vector<std::uint64_t> heap_size(spec.heap_slots, 0);  // 0 = empty
  std::vector<std::uint64_t> stack_size(spec.stack_slots, 0);
  const std::uint64_t size_span = spec.buffer_max - spec.buffer_min + 1;
  std::uint64_t pending_injections = 0;

  for (std::uint64_t i = 0; i < spec.total_ops; ++i) {
    // Fixed draw schedule: every operation consumes exactly six values.
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
    const std::uint64_t slot_draw = rng();
    const std::uint64_t size_draw = rng();
    const std::uint64_t action_draw = rng();
    const std::uint64_t off_draw = rng();
    const std::uint8_t fill = static_cast<std::uint8_t>(rng());

    if (targets.count(i)) ++pending_injections;

    TraceOp op;
    const bool heap = u < spec.heap_fraction;
    auto& sizes = heap ? heap_size : stack_size;
    op.slot = static_cast<std::uint32_t>(
        slot_draw % (heap ? spec.heap_slots : spec.stack_slots));
    op.fill = fill;
    std::uint64_t& sz = sizes[op.slot];

    if (heap && sz != 0 && pending_injections > 0) {
      // Over-length fill: starts in bounds, runs 1..8 bytes past the end.
      --pending_injections;
      op.kind = OpKind::HeapFill;
      op.size = sz;
      op.off = off_draw % sz;
      op.len = (sz - op.off) + 1 + vrng() % 8;
      op.violation = true;
      ++trace.violation_count;
      trace.ops.push_back(op);
      continue;
    }

    if (sz == 0) {
      op.kind = heap ? OpKind::HeapAlloc : OpKind::StackAlloc;
      op.size = spec.buffer_min + size_draw % size_span;
      sz = op.size;
    } else {
      op.size = sz;
      switch (action_draw % 6) {
        case 0:
          op.kind = heap ? OpKind::HeapFree : OpKind::StackFree;
          sz = 0;
          break;
        case 1:
        case 2:
          op.kind = heap ? OpKind::HeapRead : OpKind::StackRead;
          op.off = off_draw % op.size;
          break;
        case 3:
          op.kind = heap ? OpKind::HeapWrite : OpKind::StackWrite;
          op.off = off_draw % op.size;
          break;
        default:
          op.kind = heap ? OpKind::HeapFill : OpKind::StackFill;
          op.off = off_draw % op.size;
          op.len = op.size - op.off;
          break;
      }
    }
    trace.ops.push_back(op);
  }
  return trace;
}

/// Fixed system parameters for benchmark runs.
struct BenchConfig {
  std::uint64_t mt_size = 256;
  bool tbi = false;
  std::uint64_t heap_base = 0x10000;
  std::uint64_t heap_size = std::uint64_t{1} << 20;
  std::uint64_t drain_interval = 16;
  unsigned hart_id = 0;
  bool require_machine_mode = false;
  CostModel cost;
};

/// Everything a replay produces: timing metrics, the final heap image and
/// the per-violation delivery latencies (operations between the faulting
/// access and the drain that surfaced it).
struct RunOutcome {
  RunMetrics metrics;
  std::vector<std::uint8_t> memory;
  std::vector<std::uint64_t> latencies;
};

/// Replays `trace` under `mode`. Detected violations abort only the
/// offending operation; the run always continues to the end of the trace.
inline RunOutcome run_trace(const Trace& trace, RunMode mode,
                            const BenchConfig& bench) {
  if (bench.drain_interval == 0)
    throw FieldOutOfRange("drain interval must be positive");

  EngineConfig ecfg;
  ecfg.mt_size = bench.mt_size;
  ecfg.mode = validation_mode(mode);
  ecfg.hart_id = bench.hart_id;
  ecfg.require_machine_mode = bench.require_machine_mode;
  Engine engine(ecfg);

  RuntimeConfig rcfg;
  rcfg.mode = mode;
  rcfg.tbi = bench.tbi;
  rcfg.heap_base = bench.heap_base;
  rcfg.heap_size = bench.heap_size;
  rcfg.hart_id = bench.hart_id;
  HeapRuntime rt(rcfg, engine);

  CostRecorder rec(bench.cost);
  rt.set_cost_recorder(&rec);

  std::vector<std::optional<HeapHandle>> slots(trace.spec.heap_slots);
  RunOutcome out;
  std::uint64_t violations = 0;
  std::deque<std::uint64_t> pending_issue_ops;  // nb mode, FIFO with the queue

  auto drain = [&](std::uint64_t at_op) {
    const auto exns = engine.drain_exceptions();
    violations += exns.size();
    for (std::size_t k = 0; k < exns.size() && !pending_issue_ops.empty(); ++k) {
      out.latencies.push_back(at_op - pending_issue_ops.front());
      pending_issue_ops.pop_front();
    }
  };

  for (std::uint64_t i = 0; i < trace.ops.size(); ++i) {
    const TraceOp& op = trace.ops[i];
    try {
      switch (op.kind) {
        case OpKind::HeapAlloc:
          slots[op.slot] = rt.alloc(op.size);
          break;
        case OpKind::HeapFree:
          rt.dealloc(*slots[op.slot]);
          slots[op.slot].reset();
          break;
        case OpKind::HeapRead:
          rt.read(*slots[op.slot], op.off);
          break;
        case OpKind::HeapWrite:
          rt.write(*slots[op.slot], op.off, op.fill);
          break;
        case OpKind::HeapFill:
          if (op.violation && mode == RunMode::HeapSafeNb)
            pending_issue_ops.push_back(i);
          rt.fill(*slots[op.slot], op.off, op.len, op.fill);
          break;
        case OpKind::StackAlloc:
          rec.plain(kStackAllocPlain);
          break;
        case OpKind::StackFree:
          rec.plain(kStackFreePlain);
          break;
        case OpKind::StackRead:
        case OpKind::StackWrite:
          rec.plain(kAccessPlain);
          break;
        case OpKind::StackFill:
          rec.plain(kCopyBase + fill_loop_plain(op.len));
          break;
      }
    } catch (const OutOfBoundsAccess&) {
      ++violations;
      out.latencies.push_back(0);  // stalling check fires inside the op
    }

    if (mode == RunMode::HeapSafeNb && (i + 1) % bench.drain_interval == 0)
      drain(i);
  }
  if (mode == RunMode::HeapSafeNb && !trace.ops.empty())
    drain(trace.ops.size() - 1);

  out.metrics = finalize(rec);
  out.metrics.violations_detected = violations;
  if (!out.latencies.empty())
    out.metrics.detection_latency =
        static_cast<double>(std::accumulate(out.latencies.begin(),
                                            out.latencies.end(),
                                            std::uint64_t{0})) /
        static_cast<double>(out.latencies.size());
  out.memory = rt.heap().snapshot();
  return out;
}

/// One line of a fraction sweep: a mode's metrics at one heap fraction,
/// with cycles normalized to the baseline replay of the same trace.
struct SweepRow {
  double heap_fraction = 0.0;
  RunMode mode = RunMode::Baseline;
  RunMetrics metrics;
  double normalized_time = 1.0;
};

inline const std::vector<RunMode>& all_run_modes() {
  static const std::vector<RunMode> modes = {
      RunMode::Baseline, RunMode::SoftBounds, RunMode::HeapSafe,
      RunMode::HeapSafeNb};
  return modes;
}

/// Runs every mode at every fraction, reusing one trace per fraction so
/// rows differ only in protection. Rows come out grouped by fraction in
/// mode order, baseline first.
inline std::vector<SweepRow> sweep(const WorkloadSpec& base,
                                   const std::vector<double>& fractions,
                                   const BenchConfig& bench) {
  std::vector<SweepRow> rows;
  rows.reserve(fractions.size() * all_run_modes().size());
  for (double f : fractions) {
    WorkloadSpec spec = base;
    spec.heap_fraction = f;
    const Trace trace = generate(spec);
    const RunOutcome base_out = run_trace(trace, RunMode::Baseline, bench);
    const double base_cycles =
        static_cast<double>(base_out.metrics.total_cycles);
    for (RunMode mode : all_run_modes()) {
      SweepRow row;
      row.heap_fraction = f;
      row.mode = mode;
      row.metrics = mode == RunMode::Baseline
                        ? base_out.metrics
                        : run_trace(trace, mode, bench).metrics;
      row.normalized_time =
          base_cycles == 0.0
              ? 1.0
              : static_cast<double>(row.metrics.total_cycles) / base_cycles;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace heapsafe
