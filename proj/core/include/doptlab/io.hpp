#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "doptlab/estimators.hpp"
#include "doptlab/exact_dp.hpp"
#include "doptlab/mdp.hpp"
#include "doptlab/offline.hpp"

namespace doptlab {

// Structured-text documents: a typed header line, `key value` dimension
// lines, then named row-major arrays. Doubles are written with 17 significant
// digits so save/load round-trips are bit exact. Loaders re-validate all
// simplex invariants.

void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path);
FiniteMdp load_mdp(const std::filesystem::path& path);

void save_policy(const TimedPolicy& policy, const std::filesystem::path& path);
TimedPolicy load_policy(const std::filesystem::path& path);

void save_value_tables(const ValueTables& tables, const std::filesystem::path& path);
ValueTables load_value_tables(const std::filesystem::path& path);

void save_baseline(const Baseline& baseline, const std::filesystem::path& path);
Baseline load_baseline(const std::filesystem::path& path);

// TupleDataset as JSON lines, one object per record with integer fields
// "t", "s", "a", "s_next" and real field "r".
void save_dataset_jsonl(const TupleDataset& dataset, const std::filesystem::path& path);
// Rejects malformed lines or out-of-range records naming the line number.
// Bounds are checked when dims is non-null.
TupleDataset load_dataset_jsonl(const std::filesystem::path& path,
                                const ModelDims* dims = nullptr);

// EvalRun CSV: episode_index, estimate, running_mean,
// running_abs_error_vs_truth (truth supplied by the caller).
void write_eval_run_csv(const EvalRun& run, double truth, std::ostream& out);
void write_eval_run_csv(const EvalRun& run, double truth, const std::filesystem::path& path);

// Shortest-exact decimal form of a double ("%.17g"), shared by every writer
// so identical values always print identically.
std::string format_double(double value);

// FNV-1a 64-bit over bytes, for config fingerprints in manifests.
std::uint64_t fnv1a_hash(const std::string& text);

// Experiment configuration as structured text: `key value` lines, '#'
// comments. Unknown keys are rejected.
struct ExperimentConfig {
  // Environment: either a generated gridworld or an MDP file.
  std::string env = "gridworld";  // "gridworld" | "mdp_file"
  int grid_n = 10;
  double grid_slip = 0.1;
  std::uint64_t reward_seed = 1;
  std::string mdp_file;

  // Target policies: generated (count + seed) or a single policy file.
  std::string target_policy_file;
  int num_policies = 30;
  std::uint64_t policy_seed = 2;

  // Offline log used by the learned estimators.
  int offline_episodes = 1000;
  int offline_logging_policies = 5;
  std::uint64_t offline_seed = 3;

  // Evaluation protocol.
  std::vector<std::string> estimators{"on_policy_mc", "dopt", "odi", "dr"};
  int episodes = 1000;
  int runs_per_policy = 30;
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace doptlab
