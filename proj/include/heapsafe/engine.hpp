#pragma once

#include <cstdint>
#include <cstdio>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "heapsafe/errors.hpp"
#include "heapsafe/pointer.hpp"
#include "heapsafe/rocc.hpp"

namespace heapsafe {

/// One entry of the metadata table. Base is inclusive, bound exclusive.
struct MetadataRow {
  std::uint64_t tag = 0;
  std::uint64_t base = 0;
  std::uint64_t bound = 0;
  bool valid = false;
};

/// Outcome of a metadata-store request.
enum class StoreStatus : std::uint8_t {
  Ok,
  TableFull,
  DuplicateTag,
  ZeroTag,
};

constexpr const char* to_string(StoreStatus s) {
  switch (s) {
    case StoreStatus::Ok: return "ok";
    case StoreStatus::TableFull: return "table-full";
    case StoreStatus::DuplicateTag: return "duplicate-tag";
    case StoreStatus::ZeroTag: return "zero-tag";
  }
  return "?";
}

/// Fixed-size table of metadata rows searched by tag, modeling a hardware
/// content-addressable memory. Row order carries no meaning for lookup;
/// at most one valid row ever holds a given tag. Invalidated rows keep
/// their contents and become available for reuse.
class MetadataTable {
 public:
  explicit MetadataTable(std::size_t row_count) : rows_(row_count) {}

  /// Writes {tag, base, bound} into the lowest-index invalid row.
  StoreStatus store(std::uint64_t tag, std::uint64_t base, std::uint64_t bound) {
    if (tag == 0) return StoreStatus::ZeroTag;
    std::size_t slot = rows_.size();
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].valid) {
        if (rows_[i].tag == tag) return StoreStatus::DuplicateTag;
      } else if (slot == rows_.size()) {
        slot = i;
      }
    }
    if (slot == rows_.size()) return StoreStatus::TableFull;
    rows_[slot] = MetadataRow{tag, base, bound, true};
    return StoreStatus::Ok;
  }

  /// Parallel search for a valid row holding `tag`.
  const MetadataRow* find(std::uint64_t tag) const {
    for (const auto& row : rows_)
      if (row.valid && row.tag == tag) return &row;
    return nullptr;
  }

  /// Clears the valid bit of the row holding `tag`; the metadata itself is
  /// left in place. Returns false if no valid row matched.
  bool invalidate(std::uint64_t tag) {
    for (auto& row : rows_) {
      if (row.valid && row.tag == tag) {
        row.valid = false;
        return true;
      }
    }
    return false;
  }

  std::size_t size() const { return rows_.size(); }

  std::size_t occupancy() const {
    std::size_t n = 0;
    for (const auto& row : rows_) n += row.valid ? 1 : 0;
    return n;
  }

  const MetadataRow& row(std::size_t i) const { return rows_.at(i); }

 private:
  std::vector<MetadataRow> rows_;
};

/// Whether validation verdicts are returned over the response channel or
/// delivered as deferred exceptions.
enum class ValidationMode : std::uint8_t { Blocking, NonBlocking };

struct EngineConfig {
  std::uint64_t mt_size = 256;  // rows; power of two >= 2
  ValidationMode mode = ValidationMode::Blocking;
  unsigned hart_id = 0;
  bool require_machine_mode = false;
};

/// Raised asynchronously by a non-blocking engine when a validation fails.
struct AsyncException {
  unsigned hart_id = 0;
  std::uint64_t offending_word = 0;
  std::uint64_t command_sequence = 0;
};

/// One line of the engine's command trace.
struct TraceRecord {
  std::uint64_t seq = 0;
  unsigned hart_id = 0;
  std::uint32_t word = 0;
  std::uint64_t rs1 = 0;
  std::uint64_t rs2 = 0;
  std::string outcome;

  std::string to_line() const {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "%llu hart=%u inst=0x%08x rs1=0x%016llx rs2=0x%016llx %s",
                  static_cast<unsigned long long>(seq), hart_id, word,
                  static_cast<unsigned long long>(rs1),
                  static_cast<unsigned long long>(rs2), outcome.c_str());
    return std::string(buf);
  }
};

/// The coprocessor model: command decoder, metadata table and validation
/// engine. Owns one table and one exception queue; each instance is bound
/// to a hart and applies commands in issue order. Instances share no
/// state, so one engine per hart gives full isolation.
///
/// Exceptions accumulate in issue order and are observable immediately
/// after the command that raised them; drain_exceptions() transfers them
/// out as plain values.
class Engine {
 public:
  explicit Engine(EngineConfig cfg)
      : cfg_(cfg), width_(TagWidth::for_table_size(cfg.mt_size)), table_(cfg.mt_size) {}

  /// Stores {tag, base = raw, bound = raw + size} for the pointer's tag.
  StoreStatus hs_store(SafePointer sp, std::uint64_t size) {
    const std::uint64_t tag = tag_of(sp, width_);
    const std::uint64_t base = raw_of(sp, width_);
    return last_store_ = table_.store(tag, base, base + size);
  }

  /// Out-of-bounds verdict for the pointer. Tag 0 is excluded from
  /// validation; a missing or invalidated tag is out of bounds, which is
  /// what catches dangling pointers after free.
  bool hs_validate(SafePointer sp) const {
    const std::uint64_t tag = tag_of(sp, width_);
    if (tag == 0) return false;
    const MetadataRow* row = table_.find(tag);
    if (row == nullptr) return true;
    const std::uint64_t ptr = raw_of(sp, width_);
    return ptr < row->base || ptr >= row->bound;
  }

  /// Invalidates the metadata row for the pointer's tag. A missing tag is
  /// a silent no-op: the instruction is non-blocking and has no channel
  /// for reporting errors.
  void hs_free(SafePointer sp) { table_.invalidate(tag_of(sp, width_)); }

  /// Applies one command from the request channel. Returns a response only
  /// for a blocking validation; a non-blocking engine converts failed
  /// validations into queued AsyncExceptions instead.
  std::optional<EngineResponse> handle(const EngineCommand& cmd) {
    if (cfg_.require_machine_mode && !cmd.privileged)
      throw PrivilegeViolation("HeapSafe command issued outside machine mode");
    if (!is_known_function(cmd.inst.funct7))
      throw IllegalInstruction("funct7 does not select a HeapSafe function");

    const std::uint64_t seq = ++seq_;
    const SafePointer sp{cmd.rs1_value};
    std::optional<EngineResponse> resp;
    std::string outcome;

    switch (function_of(cmd.inst)) {
      case HsFunction::Store: {
        const StoreStatus st = hs_store(sp, cmd.rs2_value);
        outcome = st == StoreStatus::Ok ? "stored"
                                        : std::string("store-") + to_string(st);
        break;
      }
      case HsFunction::Validate: {
        const bool oob = hs_validate(sp);
        if (cfg_.mode == ValidationMode::Blocking && expects_response(cmd.inst)) {
          resp = EngineResponse{cmd.inst.rd, oob ? std::uint64_t{1} : 0};
          outcome = oob ? "oob" : "ok";
        } else {
          if (oob) exceptions_.push_back({cfg_.hart_id, sp.bits, seq});
          outcome = oob ? "oob-exn" : "ok";
        }
        break;
      }
      case HsFunction::Free: {
        hs_free(sp);
        outcome = "freed";
        break;
      }
    }

    if (tracing_)
      trace_.push_back({seq, cmd.hart_id, encode(cmd.inst), cmd.rs1_value,
                        cmd.rs2_value, outcome});
    return resp;
  }

  /// Returns and clears the pending exceptions, in command order.
  std::vector<AsyncException> drain_exceptions() {
    std::vector<AsyncException> out(exceptions_.begin(), exceptions_.end());
    exceptions_.clear();
    return out;
  }

  std::size_t pending_exceptions() const { return exceptions_.size(); }

  /// Status of the most recent store command. The store instruction is
  /// non-blocking, so allocation failures surface through this poll.
  StoreStatus last_store_status() const { return last_store_; }

  const MetadataTable& table() const { return table_; }
  TagWidth tag_width() const { return width_; }
  unsigned hart_id() const { return cfg_.hart_id; }
  ValidationMode mode() const { return cfg_.mode; }
  const EngineConfig& config() const { return cfg_; }

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }

 private:
  EngineConfig cfg_;
  TagWidth width_;
  MetadataTable table_;
  std::deque<AsyncException> exceptions_;
  std::uint64_t seq_ = 0;
  StoreStatus last_store_ = StoreStatus::Ok;
  bool tracing_ = false;
  std::vector<TraceRecord> trace_;
};

/// A set of engine instances, one per hart. Commands route to the instance
/// whose hartId matches; the instances are fully independent.
class EngineFleet {
 public:
  /// n engines configured like `proto`, with hart ids 0..n-1.
  EngineFleet(std::size_t n, EngineConfig proto) {
    if (n == 0) throw FieldOutOfRange("fleet needs at least one engine");
    engines_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      proto.hart_id = static_cast<unsigned>(i);
      engines_.emplace_back(proto);
    }
  }

  Engine& select_engine(unsigned hart_id) {
    for (auto& e : engines_)
      if (e.hart_id() == hart_id) return e;
    throw UnknownHart("no engine for hart " + std::to_string(hart_id));
  }

  std::optional<EngineResponse> handle(const EngineCommand& cmd) {
    return select_engine(cmd.hart_id).handle(cmd);
  }

  std::vector<AsyncException> drain_exceptions(unsigned hart_id) {
    return select_engine(hart_id).drain_exceptions();
  }

  std::size_t size() const { return engines_.size(); }

 private:
  std::vector<Engine> engines_;
};

}  // namespace heapsafe
