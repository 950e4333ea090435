#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "heapsafe/runtime.hpp"
#include "heapsafe/workload.hpp"

namespace heapsafe {

/// Quotes a field when it contains a comma, quote or line break; embedded
/// quotes are doubled. Fields without those characters pass through.
inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

/// Fixed-point formatting with a period decimal separator, so output does
/// not depend on environment locale.
inline std::string format_fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return std::string(buf);
}

inline constexpr const char* kSweepCsvHeader =
    "heapFraction,mode,cycles,instructionCount,ipc,normalizedTime,"
    "violations,detectionLatency";

inline void write_sweep_row(std::ostream& os, const SweepRow& row) {
  os << format_fixed(row.heap_fraction, 2) << ','
     << csv_escape(to_string(row.mode)) << ',' << row.metrics.total_cycles
     << ',' << row.metrics.instruction_count << ','
     << format_fixed(row.metrics.ipc, 6) << ','
     << format_fixed(row.normalized_time, 6) << ','
     << row.metrics.violations_detected << ','
     << format_fixed(row.metrics.detection_latency, 6) << '\n';
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepCsvHeader << '\n';
  for (const SweepRow& row : rows) write_sweep_row(os, row);
}

}  // namespace heapsafe
