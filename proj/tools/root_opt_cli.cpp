#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "root_opt/bridge.hpp"
#include "root_opt/error.hpp"
#include "root_opt/io.hpp"
#include "root_opt/pipeline.hpp"
#include "root_opt/sampler.hpp"
#include "root_opt/synthgen.hpp"
#include "root_opt/tasks.hpp"
#include "root_opt/trainer.hpp"
#include "root_opt/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace root_opt;

namespace {

struct CommandOptions {
  std::map<std::string, std::string> settings;  // config keys given on the command line
  std::string config_file;
  std::string dataset;
  std::string checkpoint;
  std::string metrics;
  std::string candidates;
  std::string report;
  std::string synthetic;
  std::string output;
  double tamper_u = 0.0;
  bool quiet = false;
};

void add_settings(CLI::App* cmd, CommandOptions& opts) {
  static const std::map<std::string, std::string> help = {
      {"task", "task name: gp-landscape, neg-ackley, neg-styblinski, onehot-additive"},
      {"dim", "design dimension of continuous tasks"},
      {"seq-len", "sequence length L (onehot-additive)"},
      {"alphabet", "alphabet size V (onehot-additive)"},
      {"n", "offline dataset size"},
      {"coverage", "keep the lowest p percent of the sampled pool"},
      {"normalization", "score normalization: oracle or dataset"},
      {"score-noise", "Gaussian noise std added to stored dataset scores"},
      {"epochs", "training epochs E"},
      {"batch-size", "minibatch size"},
      {"lr", "Adam learning rate"},
      {"rho", "conditioning dropout probability"},
      {"hidden", "hidden width of the noise network"},
      {"bridge", "bridge process: brownian or ou"},
      {"ou-alpha", "OU bridge stiffness"},
      {"clip", "global-norm gradient clipping on/off"},
      {"clip-norm", "gradient clipping threshold"},
      {"n-e", "synthetic functions per epoch"},
      {"n-p", "start points per synthetic function"},
      {"ell0", "base kernel lengthscale"},
      {"sigma0", "base kernel variance"},
      {"delta", "half-width of the kernel hyperparameter ranges"},
      {"eta", "gradient step size for pair generation"},
      {"grad-steps", "gradient steps M per pair"},
      {"tau", "minimum pseudo-score gap of a retained pair"},
      {"start-policy", "start points: highest, random or lowest"},
      {"fit-cap", "maximum number of points in a GP fit"},
      {"gp-noise", "GP noise variance"},
      {"denoise-steps", "diffusion horizon T (training and sampling)"},
      {"num-candidates", "number of candidates Q"},
      {"alpha", "target scale applied to the best objective value"},
      {"beta", "classifier-free guidance weight"},
      {"y-star", "best objective value source: oracle or dataset"},
      {"seed", "master seed"},
      {"repeats", "independent runs (pipeline)"},
      {"out", "output directory"},
  };
  for (const auto& key : config_keys()) {
    const auto it = help.find(key);
    cmd->add_option("--" + key, opts.settings[key], it == help.end() ? "" : it->second);
  }
  cmd->add_option("--config", opts.config_file, "JSON file whose keys are flag names; flags override it");
  cmd->add_flag("--quiet", opts.quiet, "suppress progress messages");
}

RunConfig resolve_config(const CommandOptions& opts) {
  json settings = json::object();
  if (!opts.config_file.empty()) {
    settings = read_json(opts.config_file);
    if (!settings.is_object()) throw Error(ErrorCode::kInvalidArgument, "config file must hold a JSON object");
  }
  for (const auto& [key, value] : opts.settings) {
    if (!value.empty()) settings[key] = value;
  }
  std::string task = "neg-ackley";
  if (settings.contains("task")) {
    task = settings["task"].is_string() ? settings["task"].get<std::string>() : settings["task"].dump();
  }
  RunConfig cfg = RunConfig::for_task(task);
  apply_config_json(cfg, settings);
  return cfg;
}

void progress(const CommandOptions& opts, const std::string& msg) {
  if (!opts.quiet) std::cerr << msg << '\n';
}

OfflineDataset load_or_build_dataset(const CommandOptions& opts, const RunConfig& cfg, const Task& task) {
  if (opts.dataset.empty()) return build_dataset_for(cfg, task);
  OfflineDataset data = read_dataset_csv(opts.dataset);
  if (data.dim() != task.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset dimension does not match the task");
  }
  if (cfg.dataset_options.oracle_range_normalization && task.known_best > task.known_worst) {
    data.normalization =
        ScoreNormalization::from_range(task.known_worst, task.known_best, NormalizationMode::kOracleRange);
  }
  return data;
}

int cmd_generate(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  cfg.validate();
  const Task task = make_task_for(cfg);
  const OfflineDataset data = build_dataset_for(cfg, task);
  const fs::path out = opts.output.empty() ? cfg.out_dir / "dataset.csv" : fs::path(opts.output);
  write_dataset_csv(out, data, cfg.fingerprint());
  progress(opts, "wrote " + std::to_string(data.size()) + " designs to " + out.string());
  if (!opts.synthetic.empty()) {
    const SyntheticDataset synth = generate_synthetic_dataset(data, cfg.train.synthgen, RngStream(cfg.seed).child("synthgen"), 0,
                                                              cfg.train.synthgen.functions_per_epoch);
    write_synthetic_csv(opts.synthetic, synth.pairs, cfg.fingerprint());
    progress(opts, "wrote " + std::to_string(synth.pairs.size()) + " of " + std::to_string(synth.pairs_total) +
                       " synthetic pairs to " + opts.synthetic);
  }
  return 0;
}

int cmd_train(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  cfg.validate();
  const Task task = make_task_for(cfg);
  const OfflineDataset data = load_or_build_dataset(opts, cfg, task);
  const std::string fp = cfg.fingerprint();
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const fs::path ckpt = opts.checkpoint.empty() ? cfg.out_dir / "checkpoint.json" : fs::path(opts.checkpoint);
  const fs::path metrics_path = opts.metrics.empty() ? cfg.out_dir / "metrics.jsonl" : fs::path(opts.metrics);
  MetricsWriter metrics(metrics_path, fp);
  TrainedModel model = train(data, tc, [&](const EpochStats& s) {
    metrics.write(s);
    progress(opts, "epoch " + std::to_string(s.epoch) + " loss " + std::to_string(s.mean_loss) + " pairs " +
                       std::to_string(s.pairs_kept) + "/" + std::to_string(s.pairs_total));
  });
  model.fingerprint = fp;
  for (const auto& w : model.ledger.warnings) std::cerr << "warning: " << w << '\n';
  save_checkpoint(model, ckpt);
  progress(opts, "wrote checkpoint " + ckpt.string());
  return 0;
}

int cmd_sample(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  if (opts.checkpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "sample needs --checkpoint");
  const Task task = make_task_for(cfg);
  const OfflineDataset data = load_or_build_dataset(opts, cfg, task);
  const TrainedModel model = load_checkpoint(opts.checkpoint);
  SampleConfig sc = sample_config_for(cfg, task, data, cfg.seed);
  const CandidateSet candidates = sample_candidates(model, data, sc);
  EvalReport report = evaluate(task, candidates, data);
  report.seed = cfg.seed;
  report.fingerprint = model.fingerprint;
  const fs::path out = opts.candidates.empty() ? cfg.out_dir / "candidates.csv" : fs::path(opts.candidates);
  write_candidates_csv(out, candidates, report, model.fingerprint);
  if (!opts.report.empty()) write_report(opts.report, report);
  progress(opts, "wrote " + std::to_string(candidates.size()) + " candidates to " + out.string() + "; p100 " +
                     std::to_string(report.percentiles.p100) + " vs offline best " + std::to_string(report.offline_best));
  return 0;
}

int cmd_evaluate(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  if (opts.candidates.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluate needs --candidates");
  const Task task = make_task_for(cfg);
  const OfflineDataset data = load_or_build_dataset(opts, cfg, task);
  const CandidateSet candidates = read_candidates_csv(opts.candidates);
  EvalReport report = evaluate(task, candidates, data);
  report.seed = cfg.seed;
  report.fingerprint = cfg.fingerprint();
  const fs::path out = opts.report.empty() ? cfg.out_dir / "report.json" : fs::path(opts.report);
  write_report(out, report);
  std::cout << report_to_json(report).dump(2) << '\n';
  return 0;
}

int cmd_pipeline(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  const PipelineResult result = run_pipeline(cfg, [&](const std::string& m) { progress(opts, m); });
  std::cout << result.aggregate.dump(2) << '\n';
  return 0;
}

int cmd_verify(const CommandOptions& opts) {
  VerifyOptions vo;
  vo.tamper_u = opts.tamper_u;
  const VerifyReport report = verify(vo);
  for (const auto& c : report.checks) {
    std::printf("%-4s %-42s measured=%.3e tolerance=%.3e\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.measured,
                c.tolerance);
  }
  std::printf("%s in %.2f s\n", report.all_passed() ? "all checks passed" : "verification FAILED", report.seconds);
  return report.all_passed() ? 0 : 2;
}

int cmd_schedule_dump(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  const auto s = cached_schedule(cfg.train.bridge_kind, cfg.train.horizon, cfg.train.ou_stiffness);
  const fs::path out = opts.output.empty() ? cfg.out_dir / "schedule.csv" : fs::path(opts.output);
  write_schedule_csv(out, *s);
  progress(opts, "wrote " + std::to_string(s->horizon + 1) + " rows to " + out.string());
  return 0;
}

void print_error(const std::string& name, const std::string& message, int status) {
  std::cerr << json{{"error", name}, {"message", message}, {"exit_status", status}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"root-opt: offline black-box optimization with GP-derived synthetic pairs and a Brownian-bridge model"};
  app.require_subcommand(1);
  CommandOptions opts;

  auto* generate = app.add_subcommand("generate", "build the offline dataset (and optionally one epoch of synthetic pairs)");
  add_settings(generate, opts);
  generate->add_option("--output", opts.output, "dataset CSV path (default OUT/dataset.csv)");
  generate->add_option("--synthetic", opts.synthetic, "also write synthetic pairs to this CSV");

  auto* train_cmd = app.add_subcommand("train", "train the bridge model on a dataset");
  add_settings(train_cmd, opts);
  train_cmd->add_option("--dataset", opts.dataset, "dataset CSV (default: build from the task)");
  train_cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint output path");
  train_cmd->add_option("--metrics", opts.metrics, "metrics JSONL output path");

  auto* sample = app.add_subcommand("sample", "denoise the top offline designs into candidates");
  add_settings(sample, opts);
  sample->add_option("--dataset", opts.dataset, "dataset CSV (default: build from the task)");
  sample->add_option("--checkpoint", opts.checkpoint, "trained checkpoint")->required();
  sample->add_option("--candidates", opts.candidates, "candidates CSV output path");
  sample->add_option("--report", opts.report, "also write the evaluation report here");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a candidates file with the task oracle");
  add_settings(evaluate_cmd, opts);
  evaluate_cmd->add_option("--dataset", opts.dataset, "dataset CSV (default: build from the task)");
  evaluate_cmd->add_option("--candidates", opts.candidates, "candidates CSV")->required();
  evaluate_cmd->add_option("--report", opts.report, "report JSON output path");

  auto* pipeline = app.add_subcommand("pipeline", "generate, train, sample and evaluate for each repeat");
  add_settings(pipeline, opts);

  auto* verify_cmd = app.add_subcommand("verify", "run the numerical self-checks");
  verify_cmd->add_option("--tamper-u", opts.tamper_u, "perturb every u_t of the schedule under test")->group("");

  auto* dump = app.add_subcommand("schedule-dump", "write the bridge schedule as CSV");
  add_settings(dump, opts);
  dump->add_option("--output", opts.output, "schedule CSV path (default OUT/schedule.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(opts);
    if (train_cmd->parsed()) return cmd_train(opts);
    if (sample->parsed()) return cmd_sample(opts);
    if (evaluate_cmd->parsed()) return cmd_evaluate(opts);
    if (pipeline->parsed()) return cmd_pipeline(opts);
    if (verify_cmd->parsed()) return cmd_verify(opts);
    if (dump->parsed()) return cmd_schedule_dump(opts);
  } catch (const Error& e) {
    const int status = exit_status_for(e.code());
    print_error(std::string(error_code_name(e.code())), e.what(), status);
    return status;
  } catch (const fs::filesystem_error& e) {
    print_error("Io", e.what(), 3);
    return 3;
  } catch (const std::exception& e) {
    print_error("Internal", e.what(), 2);
    return 2;
  }
  return 1;
}
