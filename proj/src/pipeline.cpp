#include "root_opt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "root_opt/error.hpp"
#include "root_opt/io.hpp"

namespace root_opt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string as_string(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw Error(ErrorCode::kInvalidArgument, "setting '" + key + "' must be a scalar");
}

double as_double(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  const std::string s = as_string(v, key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw Error(ErrorCode::kInvalidArgument, "setting '" + key + "' expects a number, got '" + s + "'");
  }
  return out;
}

long long as_integer(const json& v, const std::string& key) {
  const double d = as_double(v, key);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) {
    throw Error(ErrorCode::kInvalidArgument, "setting '" + key + "' expects an integer");
  }
  return static_cast<long long>(d);
}

int as_int(const json& v, const std::string& key) { return static_cast<int>(as_integer(v, key)); }

bool as_bool(const json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  const std::string s = as_string(v, key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(ErrorCode::kInvalidArgument, "setting '" + key + "' expects a boolean");
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"task", [](RunConfig& c, const json& v, const std::string& k) { c.task = as_string(v, k); }},
      {"dim", [](RunConfig& c, const json& v, const std::string& k) { c.dim = as_int(v, k); }},
      {"seq-len", [](RunConfig& c, const json& v, const std::string& k) { c.task_options.sequence_length = as_int(v, k); }},
      {"alphabet", [](RunConfig& c, const json& v, const std::string& k) { c.task_options.alphabet_size = as_int(v, k); }},
      {"n", [](RunConfig& c, const json& v, const std::string& k) { c.dataset_size = as_int(v, k); }},
      {"coverage", [](RunConfig& c, const json& v, const std::string& k) { c.coverage = as_double(v, k); }},
      {"normalization",
       [](RunConfig& c, const json& v, const std::string& k) {
         const std::string s = as_string(v, k);
         if (s != "oracle" && s != "dataset") {
           throw Error(ErrorCode::kInvalidArgument, "normalization must be 'oracle' or 'dataset'");
         }
         c.dataset_options.oracle_range_normalization = s == "oracle";
       }},
      {"score-noise", [](RunConfig& c, const json& v, const std::string& k) { c.dataset_options.score_noise_std = as_double(v, k); }},
      {"epochs", [](RunConfig& c, const json& v, const std::string& k) { c.train.epochs = as_int(v, k); }},
      {"batch-size", [](RunConfig& c, const json& v, const std::string& k) { c.train.batch_size = as_int(v, k); }},
      {"lr", [](RunConfig& c, const json& v, const std::string& k) { c.train.learning_rate = as_double(v, k); }},
      {"rho", [](RunConfig& c, const json& v, const std::string& k) { c.train.cond_dropout = as_double(v, k); }},
      {"hidden", [](RunConfig& c, const json& v, const std::string& k) { c.train.hidden_width = as_int(v, k); }},
      {"bridge", [](RunConfig& c, const json& v, const std::string& k) { c.train.bridge_kind = bridge_kind_from_string(as_string(v, k)); }},
      {"ou-alpha", [](RunConfig& c, const json& v, const std::string& k) { c.train.ou_stiffness = as_double(v, k); }},
      {"clip", [](RunConfig& c, const json& v, const std::string& k) { c.train.clip_gradients = as_bool(v, k); }},
      {"clip-norm", [](RunConfig& c, const json& v, const std::string& k) { c.train.clip_norm = as_double(v, k); }},
      {"n-e", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.functions_per_epoch = as_int(v, k); }},
      {"n-p", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.points_per_function = as_int(v, k); }},
      {"ell0", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.base_lengthscale = as_double(v, k); }},
      {"sigma0", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.base_variance = as_double(v, k); }},
      {"delta", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.range_halfwidth = as_double(v, k); }},
      {"eta", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.step_size = as_double(v, k); }},
      {"grad-steps", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.grad_steps = as_int(v, k); }},
      {"tau", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.pair_threshold = as_double(v, k); }},
      {"start-policy", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.start_policy = start_policy_from_string(as_string(v, k)); }},
      {"fit-cap", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.fit_cap = as_int(v, k); }},
      {"gp-noise", [](RunConfig& c, const json& v, const std::string& k) { c.train.synthgen.noise_variance = as_double(v, k); }},
      {"denoise-steps",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.train.horizon = as_int(v, k);
         c.sample.denoise_steps = c.train.horizon;
       }},
      {"num-candidates", [](RunConfig& c, const json& v, const std::string& k) { c.sample.num_candidates = as_int(v, k); }},
      {"alpha", [](RunConfig& c, const json& v, const std::string& k) { c.sample.target_scale = as_double(v, k); }},
      {"beta", [](RunConfig& c, const json& v, const std::string& k) { c.sample.guidance_weight = as_double(v, k); }},
      {"y-star",
       [](RunConfig& c, const json& v, const std::string& k) {
         const std::string s = as_string(v, k);
         if (s != "oracle" && s != "dataset") throw Error(ErrorCode::kInvalidArgument, "y-star must be 'oracle' or 'dataset'");
         c.y_star_source = s == "oracle" ? YStarSource::kOracle : YStarSource::kDataset;
       }},
      {"seed", [](RunConfig& c, const json& v, const std::string& k) { c.seed = static_cast<std::uint64_t>(as_integer(v, k)); }},
      {"repeats", [](RunConfig& c, const json& v, const std::string& k) { c.repeats = as_int(v, k); }},
      {"out", [](RunConfig& c, const json& v, const std::string& k) { c.out_dir = as_string(v, k); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void apply_config_json(RunConfig& cfg, const json& settings) {
  if (!settings.is_object()) throw Error(ErrorCode::kInvalidArgument, "configuration must be a JSON object");
  const auto& table = setters();
  // Task first so that later keys are applied on top of any task change.
  if (settings.contains("task")) table.at("task")(cfg, settings.at("task"), "task");
  for (const auto& [key, value] : settings.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorCode::kInvalidArgument, "unknown setting '" + key + "'");
    if (key != "task") it->second(cfg, value, key);
  }
}

RunConfig RunConfig::for_task(const std::string& task) {
  RunConfig cfg;
  cfg.task = task;
  if (task == "onehot-additive") cfg.train.synthgen = SynthGenConfig::discrete_defaults();
  return cfg;
}

void RunConfig::validate() const {
  const auto names = task_names();
  if (std::find(names.begin(), names.end(), task) == names.end()) {
    throw Error(ErrorCode::kUnknownTask, "unknown task '" + task + "'");
  }
  if (dim < 1) throw Error(ErrorCode::kInvalidDimension, "dimension must be >= 1");
  if (dataset_size < 1) throw Error(ErrorCode::kInvalidArgument, "dataset size must be >= 1");
  if (!(coverage > 0.0 && coverage <= 100.0)) throw Error(ErrorCode::kInvalidCoverage, "coverage must lie in (0, 100]");
  if (repeats < 1) throw Error(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  train.validate();
  sample.validate();
  if (sample.denoise_steps != train.horizon) {
    throw Error(ErrorCode::kInvalidHorizon, "denoise steps must equal the training horizon");
  }
  if (sample.num_candidates > dataset_size) {
    throw Error(ErrorCode::kInsufficientData, "more candidates requested than offline designs");
  }
}

json RunConfig::canonical() const {
  const auto& g = train.synthgen;
  json j = {
      {"task", task},
      {"dim", dim},
      {"n", dataset_size},
      {"coverage", coverage},
      {"normalization", dataset_options.oracle_range_normalization ? "oracle" : "dataset"},
      {"score-noise", dataset_options.score_noise_std},
      {"epochs", train.epochs},
      {"batch-size", train.batch_size},
      {"lr", train.learning_rate},
      {"rho", train.cond_dropout},
      {"hidden", train.hidden_width},
      {"bridge", std::string(to_string(train.bridge_kind))},
      {"ou-alpha", train.ou_stiffness},
      {"clip", train.clip_gradients},
      {"clip-norm", train.clip_norm},
      {"n-e", g.functions_per_epoch},
      {"n-p", g.points_per_function},
      {"ell0", g.base_lengthscale},
      {"sigma0", g.base_variance},
      {"delta", g.range_halfwidth},
      {"eta", g.step_size},
      {"grad-steps", g.grad_steps},
      {"tau", g.pair_threshold},
      {"start-policy", std::string(to_string(g.start_policy))},
      {"fit-cap", g.fit_cap},
      {"gp-noise", g.noise_variance},
      {"denoise-steps", sample.denoise_steps},
      {"num-candidates", sample.num_candidates},
      {"alpha", sample.target_scale},
      {"beta", sample.guidance_weight},
      {"y-star", y_star_source == YStarSource::kOracle ? "oracle" : "dataset"},
      {"seed", seed},
      {"repeats", repeats},
  };
  if (task == "onehot-additive") {
    j["seq-len"] = task_options.sequence_length;
    j["alphabet"] = task_options.alphabet_size;
  }
  return j;
}

std::string RunConfig::fingerprint() const { return hex_fingerprint(canonical().dump()); }

Task make_task_for(const RunConfig& cfg) { return make_task(cfg.task, cfg.dim, cfg.seed, cfg.task_options); }

OfflineDataset build_dataset_for(const RunConfig& cfg, const Task& task) {
  return build_offline_dataset(task, cfg.dataset_size, cfg.coverage, cfg.seed, cfg.dataset_options);
}

SampleConfig sample_config_for(const RunConfig& cfg, const Task& task, const OfflineDataset& data,
                               std::uint64_t run_seed) {
  SampleConfig s = cfg.sample;
  s.seed = run_seed;
  if (cfg.y_star_source == YStarSource::kOracle) {
    s.oracle_best = data.normalization.normalize(task.known_best);
  } else {
    s.oracle_best.reset();
  }
  return s;
}

json run_ledger_json(const RunLedger& training, const SamplingLedger& sampling) {
  return {{"training", ledger_to_json(training)},
          {"sampling",
           {{"denoise_steps_run", sampling.denoise_steps_run},
            {"candidates", sampling.candidates},
            {"target_scale", sampling.target_scale},
            {"guidance_weight", sampling.guidance_weight},
            {"oracle_best", sampling.oracle_best}}}};
}

PipelineResult run_pipeline(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const std::string fp = cfg.fingerprint();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + cfg.out_dir.string() + "': " + ec.message());

  PipelineResult result{make_task_for(cfg), {}, {}, {}};
  result.dataset = build_dataset_for(cfg, result.task);
  write_dataset_csv(cfg.out_dir / "dataset.csv", result.dataset, fp);
  say("dataset: " + std::to_string(result.dataset.size()) + " designs, best " +
      std::to_string(result.dataset.scores.maxCoeff()));

  std::vector<EvalReport> reports;
  for (int i = 0; i < cfg.repeats; ++i) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(i);
    const fs::path dir = cfg.out_dir / ("run_" + std::to_string(i));
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());

    TrainConfig tc = cfg.train;
    tc.seed = run_seed;
    MetricsWriter metrics(dir / "metrics.jsonl", fp);
    TrainedModel model = train(result.dataset, tc, [&](const EpochStats& s) {
      metrics.write(s);
      say("run " + std::to_string(i) + " epoch " + std::to_string(s.epoch) + " loss " + std::to_string(s.mean_loss));
    });
    model.fingerprint = fp;
    save_checkpoint(model, dir / "checkpoint.json");

    const SampleConfig sc = sample_config_for(cfg, result.task, result.dataset, run_seed);
    const CandidateSet candidates = sample_candidates(model, result.dataset, sc);
    EvalReport report = evaluate(result.task, candidates, result.dataset);
    report.seed = run_seed;
    report.fingerprint = fp;
    write_candidates_csv(dir / "candidates.csv", candidates, report, fp);
    write_report(dir / "report.json", report);

    SamplingLedger sl{candidates.denoise_steps_run, static_cast<int>(candidates.size()), candidates.target_scale,
                      candidates.guidance_weight, candidates.oracle_best};
    json ledger = run_ledger_json(model.ledger, sl);
    ledger["fingerprint"] = fp;
    write_json(dir / "ledger.json", ledger);
    say("run " + std::to_string(i) + " p100 " + std::to_string(report.percentiles.p100) + " (offline best " +
        std::to_string(report.offline_best) + ")");

    reports.push_back(report);
    result.runs.push_back({run_seed, std::move(report), model.ledger, sl});
  }
  result.aggregate = aggregate_reports(reports);
  write_json(cfg.out_dir / "aggregate.json", result.aggregate);
  return result;
}

}  // namespace root_opt
