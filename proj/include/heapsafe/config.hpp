#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "heapsafe/cost_model.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/runtime.hpp"
#include "heapsafe/workload.hpp"

namespace heapsafe {

/// Everything a run needs, as read from a flat key=value config file.
/// `#` starts a comment; blank lines are ignored; unknown keys are errors.
struct SystemConfig {
  unsigned n = 1;  // engine instances (harts)
  std::uint64_t mt_size = 256;
  RunMode mode = RunMode::HeapSafe;
  bool tbi = false;
  std::uint64_t heap_size = std::uint64_t{1} << 20;
  std::uint64_t seed = 1;
  std::uint64_t drain_interval = 16;
  bool require_machine_mode = false;
  std::string workload = "synthetic";  // or cwe122 / cwe416
  std::uint64_t total_ops = 2000;
  double heap_fraction = 0.75;
  std::uint64_t buffer_min = 8;
  std::uint64_t buffer_max = 24;
  std::uint64_t inject_violations = 0;
  CostModel cost;

  WorkloadSpec workload_spec() const {
    WorkloadSpec spec;
    spec.total_ops = total_ops;
    spec.heap_fraction = heap_fraction;
    spec.buffer_min = buffer_min;
    spec.buffer_max = buffer_max;
    spec.inject_violations = inject_violations;
    spec.seed = seed;
    return spec;
  }

  BenchConfig bench_config() const {
    BenchConfig bench;
    bench.mt_size = mt_size;
    bench.tbi = tbi;
    bench.heap_size = heap_size;
    bench.drain_interval = drain_interval;
    bench.require_machine_mode = require_machine_mode;
    bench.cost = cost;
    return bench;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& v, int line,
                               const std::string& key) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-')
    throw ConfigParseError("line " + std::to_string(line) +
                           ": invalid integer for '" + key + "': " + v);
  return out;
}

inline double parse_f64(const std::string& v, int line, const std::string& key) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty())
    throw ConfigParseError("line " + std::to_string(line) +
                           ": invalid number for '" + key + "': " + v);
  return out;
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigParseError("line " + std::to_string(line) +
                         ": invalid boolean for '" + key + "': " + v);
}

}  // namespace detail

inline SystemConfig parse_config_text(const std::string& text) {
  SystemConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string stripped = detail::trim(raw);
    if (stripped.empty()) continue;

    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigParseError("line " + std::to_string(line) +
                             ": expected key=value, got '" + stripped + "'");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigParseError("line " + std::to_string(line) + ": empty key");

    if (key == "n") {
      cfg.n = static_cast<unsigned>(detail::parse_u64(value, line, key));
    } else if (key == "mtSize") {
      cfg.mt_size = detail::parse_u64(value, line, key);
    } else if (key == "mode") {
      try {
        cfg.mode = parse_run_mode(value);
      } catch (const ConfigParseError& e) {
        throw ConfigParseError("line " + std::to_string(line) + ": " + e.what());
      }
    } else if (key == "tbi") {
      cfg.tbi = detail::parse_bool(value, line, key);
    } else if (key == "heapSize") {
      cfg.heap_size = detail::parse_u64(value, line, key);
    } else if (key == "seed") {
      cfg.seed = detail::parse_u64(value, line, key);
    } else if (key == "drainInterval") {
      cfg.drain_interval = detail::parse_u64(value, line, key);
    } else if (key == "requireMachineMode") {
      cfg.require_machine_mode = detail::parse_bool(value, line, key);
    } else if (key == "workload") {
      if (value != "synthetic" && value != "cwe122" && value != "cwe416")
        throw ConfigParseError("line " + std::to_string(line) +
                               ": unknown workload '" + value + "'");
      cfg.workload = value;
    } else if (key == "totalOps") {
      cfg.total_ops = detail::parse_u64(value, line, key);
    } else if (key == "heapFraction") {
      cfg.heap_fraction = detail::parse_f64(value, line, key);
    } else if (key == "bufferMin") {
      cfg.buffer_min = detail::parse_u64(value, line, key);
    } else if (key == "bufferMax") {
      cfg.buffer_max = detail::parse_u64(value, line, key);
    } else if (key == "injectViolations") {
      cfg.inject_violations = detail::parse_u64(value, line, key);
    } else if (key == "costPlainInstr") {
      cfg.cost.plain_instr = detail::parse_u64(value, line, key);
    } else if (key == "costSoftBoundsCheck") {
      cfg.cost.soft_bounds_check = detail::parse_u64(value, line, key);
    } else if (key == "costBlockingValidateStall") {
      cfg.cost.blocking_validate_stall = detail::parse_u64(value, line, key);
    } else if (key == "costNbIssue") {
      cfg.cost.nb_issue = detail::parse_u64(value, line, key);
    } else if (key == "costStoreIssue") {
      cfg.cost.store_issue = detail::parse_u64(value, line, key);
    } else if (key == "costFreeIssue") {
      cfg.cost.free_issue = detail::parse_u64(value, line, key);
    } else {
      throw ConfigParseError("line " + std::to_string(line) +
                             ": unknown key '" + key + "'");
    }
  }

  if (cfg.n < 1) throw ConfigParseError("n must be at least 1");
  if (cfg.mt_size < 2 || !std::has_single_bit(cfg.mt_size) ||
      cfg.mt_size > (std::uint64_t{1} << 16))
    throw ConfigParseError("mtSize must be a power of two in [2, 65536]");
  if (cfg.heap_fraction < 0.0 || cfg.heap_fraction > 1.0)
    throw ConfigParseError("heapFraction must lie in [0, 1]");
  if (cfg.buffer_min == 0 || cfg.buffer_max < cfg.buffer_min)
    throw ConfigParseError("bufferMin/bufferMax range is empty");
  if (cfg.drain_interval == 0)
    throw ConfigParseError("drainInterval must be at least 1");
  if (cfg.heap_size == 0) throw ConfigParseError("heapSize must be positive");
  try {
    cfg.cost.validate();
  } catch (const FieldOutOfRange& e) {
    throw ConfigParseError(std::string("cost model: ") + e.what());
  }
  return cfg;
}

inline SystemConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace heapsafe
