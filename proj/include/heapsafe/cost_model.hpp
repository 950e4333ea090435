#pragma once

#include <cstdint>

#include "heapsafe/errors.hpp"

namespace heapsafe {

/// Cycle weights for the timing model. One ordinary instruction retires in
/// plain_instr cycles; a software bounds check expands to soft_bounds_check
/// ordinary instructions; each coprocessor command issues as a single
/// instruction that occupies the pipeline for the given number of cycles.
/// Blocking validation stalls until the verdict returns, so it is the only
/// command whose weight exceeds an ordinary issue.
struct CostModel {
  std::uint64_t plain_instr = 1;
  std::uint64_t soft_bounds_check = 8;
  std::uint64_t blocking_validate_stall = 4;
  std::uint64_t nb_issue = 1;
  std::uint64_t store_issue = 1;
  std::uint64_t free_issue = 1;

  /// Weights must be positive, and issuing a non-blocking validation can
  /// never cost more than stalling for a blocking one.
  void validate() const {
    if (plain_instr == 0 || soft_bounds_check == 0 ||
        blocking_validate_stall == 0 || nb_issue == 0 || store_issue == 0 ||
        free_issue == 0)
      throw FieldOutOfRange("cost weights must be positive");
    if (nb_issue > blocking_validate_stall)
      throw FieldOutOfRange(
          "non-blocking issue cost exceeds blocking validation stall");
  }
};

/// Plain-instruction budgets for the bookkeeping inside each high-level
/// operation: allocator metadata updates, loop overhead around a copy,
/// side-table maintenance. One unit is one ordinary instruction.
inline constexpr std::uint64_t kAllocPlain = 16;
inline constexpr std::uint64_t kFreePlain = 12;
inline constexpr std::uint64_t kCopyBase = 4;
inline constexpr std::uint64_t kAccessPlain = 2;
inline constexpr std::uint64_t kTagDrawPlain = 2;
inline constexpr std::uint64_t kTagReturnPlain = 1;
inline constexpr std::uint64_t kSoftInsertPlain = 6;
inline constexpr std::uint64_t kSoftErasePlain = 4;
inline constexpr std::uint64_t kStackAllocPlain = 4;
inline constexpr std::uint64_t kStackFreePlain = 2;

/// The modeled copy loop moves one 64-bit word per instruction.
inline constexpr std::uint64_t kCopyWordBytes = 8;

constexpr std::uint64_t fill_loop_plain(std::uint64_t len) {
  return (len + kCopyWordBytes - 1) / kCopyWordBytes;
}

/// Accumulates instruction and cycle counts for one run. Every recorded
/// event adds to both totals: a soft bounds check counts as
/// soft_bounds_check ordinary instructions, while each coprocessor command
/// counts as one instruction costing its issue weight in cycles.
class CostRecorder {
 public:
  explicit CostRecorder(CostModel model) : model_(model) { model_.validate(); }

  void plain(std::uint64_t n = 1) {
    instructions_ += n;
    cycles_ += n * model_.plain_instr;
    plain_events_ += n;
  }

  void soft_check() {
    instructions_ += model_.soft_bounds_check;
    cycles_ += model_.soft_bounds_check * model_.plain_instr;
    ++soft_check_events_;
  }

  void validate_blocking() {
    instructions_ += 1;
    cycles_ += model_.blocking_validate_stall;
    ++blocking_validate_events_;
  }

  void validate_nb() {
    instructions_ += 1;
    cycles_ += model_.nb_issue;
    ++nb_validate_events_;
  }

  void store_issue() {
    instructions_ += 1;
    cycles_ += model_.store_issue;
    ++store_events_;
  }

  void free_issue() {
    instructions_ += 1;
    cycles_ += model_.free_issue;
    ++free_events_;
  }

  std::uint64_t cycles() const { return cycles_; }
  std::uint64_t instructions() const { return instructions_; }

  std::uint64_t plain_events() const { return plain_events_; }
  std::uint64_t soft_check_events() const { return soft_check_events_; }
  std::uint64_t blocking_validate_events() const { return blocking_validate_events_; }
  std::uint64_t nb_validate_events() const { return nb_validate_events_; }
  std::uint64_t store_events() const { return store_events_; }
  std::uint64_t free_events() const { return free_events_; }

  const CostModel& model() const { return model_; }

 private:
  CostModel model_;
  std::uint64_t cycles_ = 0;
  std::uint64_t instructions_ = 0;
  std::uint64_t plain_events_ = 0;
  std::uint64_t soft_check_events_ = 0;
  std::uint64_t blocking_validate_events_ = 0;
  std::uint64_t nb_validate_events_ = 0;
  std::uint64_t store_events_ = 0;
  std::uint64_t free_events_ = 0;
};

/// Summary of one benchmark run.
struct RunMetrics {
  std::uint64_t total_cycles = 0;
  std::uint64_t instruction_count = 0;
  double ipc = 0.0;
  std::uint64_t violations_detected = 0;
  double detection_latency = 0.0;  // mean ops from faulting access to delivery
  bool completed = true;
};

inline RunMetrics finalize(const CostRecorder& rec) {
  RunMetrics m;
  m.total_cycles = rec.cycles();
  m.instruction_count = rec.instructions();
  m.ipc = m.total_cycles == 0
              ? 0.0
              : static_cast<double>(m.instruction_count) /
                    static_cast<double>(m.total_cycles);
  return m;
}

}  // namespace heapsafe
