// Command-line front end: runs workloads, fraction sweeps and attack
// replays over the simulated heap-protection stack, emitting CSV for the
// numeric paths and a verdict line for attacks.
//
// Exit codes: 0 clean run, 2 violation detected, 1 usage or config error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heapsafe/attacks.hpp"
#include "heapsafe/config.hpp"
#include "heapsafe/csv.hpp"
#include "heapsafe/errors.hpp"
#include "heapsafe/runtime.hpp"
#include "heapsafe/workload.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

struct OutStream {
  std::ofstream file;
  std::ostream* os = &std::cout;
  bool to_file = false;

  explicit OutStream(const std::string& path) {
    if (path.empty()) return;
    file.open(path);
    if (!file)
      throw heapsafe::ConfigParseError("cannot open output file: " + path);
    os = &file;
    to_file = true;
  }
};

int run_attack_command(const heapsafe::SystemConfig& cfg,
                       const std::string& name) {
  const heapsafe::AttackReport rep =
      heapsafe::run_attack(name, cfg.mode, cfg.bench_config());

  std::cout << "attack: " << rep.name << "\n";
  std::cout << "mode: " << heapsafe::to_string(rep.mode) << "\n";
  for (const std::string& line : rep.log) std::cout << "  " << line << "\n";
  std::cout << "corrupted bytes: " << rep.corrupted_bytes << "\n";
  std::cout << "data leaked: " << (rep.leaked ? "yes" : "no") << "\n";
  std::cout << "detection latency: " << rep.detection_latency << " ops\n";
  if (rep.name == "cwe416")
    std::cout << "same-size reuse probe flagged: "
              << (rep.reuse_probe_flagged ? "yes" : "no") << "\n";

  if (rep.detected) {
    if (rep.name == "cwe122")
      std::cout << "verdict: detected at offset " << rep.violation_offset
                << "\n";
    else
      std::cout << "verdict: detected\n";
    return kExitViolation;
  }
  if (rep.leaked)
    std::cout << "verdict: undetected, data leaked\n";
  else if (rep.corrupted_bytes > 0)
    std::cout << "verdict: undetected, " << rep.corrupted_bytes
              << " bytes corrupted\n";
  else
    std::cout << "verdict: undetected\n";
  return kExitClean;
}

int run_command(const heapsafe::SystemConfig& cfg, const std::string& out_path) {
  if (cfg.workload != "synthetic") return run_attack_command(cfg, cfg.workload);

  const heapsafe::Trace trace = heapsafe::generate(cfg.workload_spec());
  const heapsafe::BenchConfig bench = cfg.bench_config();
  const heapsafe::RunOutcome base =
      heapsafe::run_trace(trace, heapsafe::RunMode::Baseline, bench);
  const heapsafe::RunOutcome outcome =
      cfg.mode == heapsafe::RunMode::Baseline
          ? base
          : heapsafe::run_trace(trace, cfg.mode, bench);

  heapsafe::SweepRow row;
  row.heap_fraction = cfg.heap_fraction;
  row.mode = cfg.mode;
  row.metrics = outcome.metrics;
  row.normalized_time =
      base.metrics.total_cycles == 0
          ? 1.0
          : static_cast<double>(outcome.metrics.total_cycles) /
                static_cast<double>(base.metrics.total_cycles);

  OutStream out(out_path);
  heapsafe::write_sweep_csv(*out.os, {row});
  if (out.to_file) {
    std::cout << "mode " << heapsafe::to_string(cfg.mode) << ": "
              << outcome.metrics.total_cycles << " cycles, "
              << outcome.metrics.instruction_count << " instructions, ipc "
              << heapsafe::format_fixed(outcome.metrics.ipc, 6) << ", "
              << outcome.metrics.violations_detected
              << " violations detected\n";
  }
  return outcome.metrics.violations_detected > 0 ? kExitViolation : kExitClean;
}

int sweep_command(const heapsafe::SystemConfig& cfg,
                  std::vector<double> fractions, const std::string& out_path) {
  if (fractions.empty()) fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (double f : fractions)
    if (f < 0.0 || f > 1.0)
      throw heapsafe::ConfigParseError("sweep fraction outside [0, 1]");

  heapsafe::WorkloadSpec spec = cfg.workload_spec();
  spec.inject_violations = 0;  // sweeps measure overhead, not detection
  const std::vector<heapsafe::SweepRow> rows =
      heapsafe::sweep(spec, fractions, cfg.bench_config());

  OutStream out(out_path);
  heapsafe::write_sweep_csv(*out.os, rows);
  if (out.to_file)
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator for hardware-assisted heap protection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string mode_name;
  std::string attack_name;
  std::uint64_t seed = 0;
  std::vector<double> fractions;

  CLI::App* run = app.add_subcommand("run", "Run one workload, emit a CSV row");
  run->add_option("--config", config_path, "Config file (key=value lines)");
  run->add_option("--out", out_path, "Write CSV to this file");
  run->add_option("--mode", mode_name,
                  "baseline | softbc | heapsafe | heapsafe-nb");
  CLI::Option* run_seed = run->add_option("--seed", seed, "Workload seed");

  CLI::App* sweep =
      app.add_subcommand("sweep", "Run every mode across heap fractions");
  sweep->add_option("--config", config_path, "Config file (key=value lines)");
  sweep->add_option("--out", out_path, "Write CSV to this file");
  CLI::Option* sweep_seed = sweep->add_option("--seed", seed, "Workload seed");
  sweep->add_option("--fractions", fractions, "Comma-separated heap fractions")
      ->delimiter(',');

  CLI::App* attack =
      app.add_subcommand("attack", "Replay a known-vulnerability scenario");
  attack->add_option("name", attack_name, "cwe122 | cwe416");
  attack->add_option("--config", config_path, "Config file (key=value lines)");
  attack->add_option("--mode", mode_name,
                     "baseline | softbc | heapsafe | heapsafe-nb");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitClean : kExitError;
  }

  try {
    heapsafe::SystemConfig cfg;
    if (!config_path.empty()) cfg = heapsafe::parse_config_file(config_path);
    if (!mode_name.empty()) cfg.mode = heapsafe::parse_run_mode(mode_name);
    if (run_seed->count() > 0 || sweep_seed->count() > 0) cfg.seed = seed;

    if (run->parsed()) return run_command(cfg, out_path);
    if (sweep->parsed()) return sweep_command(cfg, fractions, out_path);
    if (attack->parsed()) {
      std::string name = attack_name;
      if (name.empty()) {
        if (cfg.workload == "synthetic")
          throw heapsafe::ConfigParseError(
              "attack needs a name (cwe122 or cwe416), given as argument "
              "or as the config's workload");
        name = cfg.workload;
      }
      return run_attack_command(cfg, name);
    }
    return kExitError;
  } catch (const heapsafe::ConfigParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
