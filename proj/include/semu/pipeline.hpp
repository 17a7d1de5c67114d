#pragma once

#include <string>
#include <vector>

#include "semu/config.hpp"

namespace semu {

// Experiment orchestration. Every operation writes its outputs under out_dir
// with fixed filenames (checkpoint.json, report.json, spectrum.csv,
// samples.csv, oracle.json, *_log.csv) and returns a human-readable summary
// for the caller to print. Errors surface as the usual typed exceptions.

// Pretraining for either task; diffusion runs also write oracle.json.
std::string run_train(const RunConfig& cfg, const std::string& out_dir);

// Full unlearning chain: split, selection gradient, adapters, relabel,
// fine-tune, merge, evaluate. oracle_path applies to diffusion runs only
// (empty means "oracle.json next to the checkpoint"). When the config lists
// seeds.unlearn_seeds, each seed runs into out_dir/seed_<s>/ and jobs > 1
// executes them concurrently.
std::string run_unlearn(const RunConfig& cfg, const std::string& checkpoint_path,
                        const std::string& oracle_path, const std::string& out_dir,
                        bool log_metrics, std::size_t jobs);

// kind: retrain | ft | ga | rl | all. "all" fans out into out_dir/<kind>/.
std::string run_baseline_cmd(const RunConfig& cfg, const std::string& kind,
                             const std::string& checkpoint_path,
                             const std::string& out_dir, std::size_t jobs);

// Metrics for an existing checkpoint without touching it.
std::string run_eval_cmd(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& oracle_path, const std::string& out_dir);

// Selection diagnostics only: gradient, SVD, spectrum.csv.
std::string run_spectrum_cmd(const RunConfig& cfg, const std::string& checkpoint_path,
                             const std::string& out_dir);

// Side-by-side report table; anchor_index < 0 means no delta column. Writes
// compare.json and returns the rendered text table.
std::string run_compare(const std::vector<std::string>& report_paths, int anchor_index,
                        const std::string& out_dir);

}  // namespace semu
