#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "root_opt/sampler.hpp"
#include "root_opt/tasks.hpp"
#include "root_opt/trainer.hpp"

namespace root_opt {

enum class YStarSource { kOracle, kDataset };

struct RunConfig {
  std::string task = "neg-ackley";
  int dim = 2;
  TaskOptions task_options;
  int dataset_size = 5000;
  double coverage = 100.0;
  DatasetOptions dataset_options;
  TrainConfig train;
  SampleConfig sample;
  YStarSource y_star_source = YStarSource::kOracle;
  std::uint64_t seed = 0;
  int repeats = 8;
  std::filesystem::path out_dir = "root_opt_out";

  // Defaults appropriate for the named task (discrete tasks use the discrete
  // synthetic-data hyperparameters).
  static RunConfig for_task(const std::string& task);

  void validate() const;
  // Every setting that influences results; paths are excluded.
  nlohmann::json canonical() const;
  std::string fingerprint() const;
};

// Keys are the command-line flag names without leading dashes. Values may be
// JSON numbers/booleans or strings. Unknown keys are rejected.
void apply_config_json(RunConfig& cfg, const nlohmann::json& settings);
std::vector<std::string> config_keys();

Task make_task_for(const RunConfig& cfg);
OfflineDataset build_dataset_for(const RunConfig& cfg, const Task& task);
SampleConfig sample_config_for(const RunConfig& cfg, const Task& task, const OfflineDataset& data,
                               std::uint64_t run_seed);

struct SamplingLedger {
  int denoise_steps_run = 0;
  int candidates = 0;
  double target_scale = 0.0;
  double guidance_weight = 0.0;
  double oracle_best = 0.0;
};

nlohmann::json run_ledger_json(const RunLedger& training, const SamplingLedger& sampling);

struct RunResult {
  std::uint64_t seed = 0;
  EvalReport report;
  RunLedger training;
  SamplingLedger sampling;
};

struct PipelineResult {
  Task task;
  OfflineDataset dataset;
  std::vector<RunResult> runs;
  nlohmann::json aggregate;
};

using ProgressFn = std::function<void(const std::string&)>;

// generate -> train -> sample -> evaluate for each repeat (seeds seed+i), writing
// dataset.csv, run_i/{checkpoint.json, metrics.jsonl, candidates.csv,
// report.json, ledger.json} and aggregate.json under out_dir.
PipelineResult run_pipeline(const RunConfig& cfg, const ProgressFn& progress = {});

}  // namespace root_opt
