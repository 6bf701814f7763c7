#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptznav/navpolicy.hpp"
#include "ptznav/navsim.hpp"
#include "ptznav/noisegen.hpp"
#include "ptznav/ptzmodel.hpp"

namespace ptznav::pipeline {

// Exit codes shared by the CLI and the in-process entry point.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Full CLI, callable in-process: args exclude the program name.
// Subcommands: gen-noise, gen-pairs, train-ptz, eval-ptz, gen-world,
// collect, train-policy, eval-nav, render-rollout, report, verify.
int run_cli(const std::vector<std::string>& args);

// One aggregated evaluation record per (training source, seed).
struct PtzEvalRecord {
  std::string source;
  std::uint64_t seed = 0;
  double overlap_iou = 0.0;
  double nonoverlap_success = 0.0;
  std::size_t n_overlap = 0;
  std::size_t n_nonoverlap = 0;
};

struct NavEvalRecord {
  std::string encoder_mode;
  std::string data_tier;
  int max_subseq = 1;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;
};

void append_ptz_eval_record(const PtzEvalRecord& r, const std::string& path);
void append_nav_eval_record(const NavEvalRecord& r, const std::string& path);
std::vector<PtzEvalRecord> read_ptz_eval_records(const std::string& path);
std::vector<NavEvalRecord> read_nav_eval_records(const std::string& path);

// Aggregates evaluation CSVs from the run directories into a per-source
// table and a per-configuration table named `<tier>_<mode>_lstm_<L>`.
// Returns false when no records were found at all.
bool write_reports(const std::vector<std::string>& run_dirs,
                   const std::string& out_dir);

// Invariant battery over a run directory; prints one verdict line per check
// and returns true when everything passed.
bool verify_run(const std::string& run_dir);

}  // namespace ptznav::pipeline
