// Acceptance suite: one PASS/FAIL line per criterion with the measured values.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "root_opt/bridge.hpp"
#include "root_opt/error.hpp"
#include "root_opt/gp_posterior.hpp"
#include "root_opt/io.hpp"
#include "root_opt/noise_model.hpp"
#include "root_opt/pipeline.hpp"
#include "root_opt/sampler.hpp"
#include "root_opt/synthgen.hpp"
#include "root_opt/tasks.hpp"
#include "root_opt/trainer.hpp"

using namespace root_opt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double scaled_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// ---------------------------------------------------------------- 1
Outcome bridge_oracle() {
  const auto t0 = Clock::now();
  const int T = 200;
  const auto s = brownian_schedule(T);
  auto k = [T](int a, int b) {
    const double lo = std::min(a, b), hi = std::max(a, b);
    return 2.0 * (lo / T) * (1.0 - hi / T);
  };
  double worst = 0.0;
  int worst_t = 0;
  for (int t = 2; t <= T; ++t) {
    // Conditional mean psi_{t-1} + g (x_t - psi_t) with g = k(t-1,t)/k(t,t);
    // at t = T the kernel ratio is taken in its limit (t-1)/t.
    const double g = t < T ? k(t - 1, t) / k(t, t) : (t - 1.0) / t;
    const double var = t < T ? k(t - 1, t - 1) - k(t - 1, t) * k(t - 1, t) / k(t, t) : k(t - 1, t - 1);
    const double a_prev = 1.0 - (t - 1.0) / T, a_t = 1.0 - static_cast<double>(t) / T;
    const double m_prev = (t - 1.0) / T, m_t = static_cast<double>(t) / T;
    const double c_x0 = a_prev - g * a_t, c_xT = m_prev - g * m_t;
    // Network target is x_t - x0, so the mean is (u + w) x_t + v x_T - w x_0.
    const double w = -c_x0, u = g - w, v = c_xT;
    const double e = std::max({scaled_err(s.u[t], u), scaled_err(s.v[t], v), scaled_err(s.w[t], w),
                               scaled_err(s.kappa_tilde[t - 1], var)});
    if (e > worst) worst = e, worst_t = t;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 1.0,
          fmt("T=200, t=2..200: max rel err %.2e at t=%d (tol 1e-10); %.3f s (limit 1 s)", worst, worst_t, secs)};
}

// ---------------------------------------------------------------- 2
Outcome marginal_consistency() {
  const auto t0 = Clock::now();
  const auto s = brownian_schedule(200);
  const int n = 100000;
  Eigen::VectorXd x0(1), xT(1);
  x0 << 0.8;
  xT << -1.1;
  RngStream rng(2024);
  double worst = 0.0;
  std::string per_t;
  for (int t : {2, 100, 200}) {
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd eps = rng.normal_vector(1);
      const Eigen::VectorXd xt = forward_sample(s, x0, xT, t, eps);
      const Eigen::VectorXd target = training_target(s, x0, xT, t, eps);
      const double x = backward_transition_mean(s, xt, xT, target, t)[0] + std::sqrt(s.kappa_tilde[t - 1]) * rng.normal();
      sum += x;
      sum2 += x * x;
    }
    const double mu = sum / n, var = sum2 / n - mu * mu;
    const double ref_mu = (1.0 - (t - 1) / 200.0) * x0[0] + (t - 1) / 200.0 * xT[0];
    const double ref_var = s.kappa[t - 1];
    const double z_mu = std::abs(mu - ref_mu) / std::sqrt(ref_var / n);
    const double z_var = std::abs(var - ref_var) / (ref_var * std::sqrt(2.0 / n));
    worst = std::max({worst, z_mu, z_var});
    per_t += fmt(" t=%d:(%.2f,%.2f)", t, z_mu, z_var);
  }
  const double secs = seconds_since(t0);
  return {worst <= 4.0 && secs < 30.0,
          fmt("1e5 draws, z-scores (mean,var)%s; max %.2f (tol 4); %.2f s (limit 30 s)", per_t.c_str(), worst, secs)};
}

// ---------------------------------------------------------------- 3
struct LimitDev {
  double mean = 0, var = 0;
};

LimitDev ou_limit(int T, double a) {
  const auto s = ou_schedule(T, a);
  LimitDev d;
  for (int t = 0; t <= T; ++t) {
    d.mean = std::max(d.mean, std::abs(s.m[t] - static_cast<double>(t) / T));
    d.mean = std::max(d.mean, std::abs(s.source_weight[t] - (1.0 - static_cast<double>(t) / T)));
    const double brown = static_cast<double>(t) * (T - t) / T;
    if (brown > 0) d.var = std::max(d.var, std::abs(s.kappa[t] - brown) / brown);
  }
  return d;
}

Outcome boundary_pinning() {
  RngStream rng(3);
  bool exact = true;
  std::vector<BridgeSchedule> schedules{brownian_schedule(200), ou_schedule(200, 0.01), ou_schedule(100, 1e-4),
                                        ou_schedule(50, 0.5)};
  for (const auto& s : schedules) {
    exact = exact && s.kappa[0] == 0.0 && s.kappa[s.horizon] == 0.0;
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd x0 = rng.normal_vector(4), xT = rng.normal_vector(4), eps = rng.normal_vector(4) * 10;
      exact = exact && forward_sample(s, x0, xT, 0, eps) == x0 && forward_sample(s, x0, xT, s.horizon, eps) == xT;
    }
  }
  const LimitDev d20 = ou_limit(20, 1e-4), d100 = ou_limit(100, 1e-4), d200 = ou_limit(200, 1e-4);
  const bool pass = exact && d20.mean <= 1e-6 && d20.var <= 1e-4;
  return {pass, fmt("endpoints exact=%s; OU alpha=1e-4 at T=20: mean dev %.2e (tol 1e-6), var rel dev %.2e (tol 1e-4); "
                    "for reference T=100: %.2e/%.2e, T=200: %.2e/%.2e (mean dev grows as (alpha T)^2/(9 sqrt 3))",
                    exact ? "yes" : "no", d20.mean, d20.var, d100.mean, d100.var, d200.mean, d200.var)};
}

// ---------------------------------------------------------------- 4
double rel_vec_err(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  const double scale = ref.cwiseAbs().maxCoeff();
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - ref[i]) / std::max({std::abs(a[i]), std::abs(ref[i]), 1e-4 * scale, 1e-300}));
  return worst;
}

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  RngStream rng(4);
  double gp_worst = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 16, d = 5;
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) X.row(i) = rng.normal_vector(d).transpose();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto gp = fit_posterior(X, rng.normal_vector(n), idx, KernelConfig{rng.uniform(0.75, 1.25), rng.uniform(0.75, 1.25), 1e-4});
    const Eigen::VectorXd x = rng.normal_vector(d);
    Eigen::VectorXd fd(d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd p = x, m = x;
      p[j] += 1e-4;
      m[j] -= 1e-4;
      fd[j] = (gp.mean(p) - gp.mean(m)) / 2e-4;
    }
    gp_worst = std::max(gp_worst, rel_vec_err(gp.gradient(x), fd));
  }
  double net_worst = 0;
  for (int k = 0; k < 100; ++k) {
    const int d = 2;
    NoiseNetwork net = NoiseNetwork::initialize(d, 6, rng);
    net.parameters().layers.back().weight *= 100.0;
    for (auto& l : net.parameters().layers) l.bias = rng.normal_vector(l.bias.size()) * 0.2;
    Eigen::MatrixXd in(d + kConditionWidth, 3), tg(d, 3);
    for (int j = 0; j < 3; ++j) {
      write_input_column(in.col(j), rng.normal_vector(d), rng.uniform(0, 1),
                         j == 1 ? std::optional<Condition>{} : Condition{rng.normal(), rng.normal()});
      tg.col(j) = rng.normal_vector(d);
    }
    const auto g = loss_and_gradients(net, in, tg).gradients;
    for (std::size_t l = 0; l < 4; ++l) {
      auto probe = [&](Eigen::Ref<Eigen::VectorXd> p, const Eigen::VectorXd& an) {
        Eigen::VectorXd fd(p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double keep = p[i];
          p[i] = keep + 1e-5;
          const double up = loss_and_gradients(net, in, tg).loss;
          p[i] = keep - 1e-5;
          const double dn = loss_and_gradients(net, in, tg).loss;
          p[i] = keep;
          fd[i] = (up - dn) / 2e-5;
        }
        net_worst = std::max(net_worst, rel_vec_err(an, fd));
      };
      auto& layer = net.parameters().layers[l];
      Eigen::Map<Eigen::VectorXd> w(layer.weight.data(), layer.weight.size());
      probe(w, Eigen::Map<const Eigen::VectorXd>(g.layers[l].weight.data(), g.layers[l].weight.size()));
      probe(layer.bias, g.layers[l].bias);
    }
  }
  const double secs = seconds_since(t0);
  return {gp_worst <= 1e-5 && net_worst <= 1e-4 && secs < 60,
          fmt("100 GP instances: max rel err %.2e (tol 1e-5); 100 network instances: %.2e (tol 1e-4); %.2f s (limit 60 s)",
              gp_worst, net_worst, secs)};
}

// ---------------------------------------------------------------- 5
Outcome pair_validity() {
  const Task task = make_task("neg-ackley", 2, 0);
  // At most fit_cap points so every GP sees the whole dataset and can be rebuilt.
  const OfflineDataset data = build_offline_dataset(task, 500, 50.0, 5);
  const SynthGenConfig cfg = SynthGenConfig::continuous_defaults();
  const auto st = ScoreStandardization::fit(data.scores);
  const Eigen::VectorXd z = data.scores.unaryExpr([&](double y) { return st.standardize(y); });
  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.size()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});

  const RngStream master(55);
  long kept = 0, total = 0, violations = 0;
  double sum = 0, sum2 = 0, min_gap = INFINITY;
  int functions = 0;
  while (kept < 100000 && functions < 400) {
    const RngStream stream = master.child("function", static_cast<std::uint64_t>(functions));
    const auto batch = generate_function_batch(data, cfg, stream, functions);
    RngStream replay = stream;
    const auto gp = fit_posterior(data.designs, z, all, sample_kernel_config(replay, cfg));
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const double gap = gp.mean(batch.high_designs.row(i).transpose()) - gp.mean(batch.low_designs.row(i).transpose());
      violations += gap < cfg.pair_threshold ? 1 : 0;
      min_gap = std::min(min_gap, gap);
      sum += gap;
      sum2 += gap * gap;
    }
    kept += batch.size();
    total += cfg.points_per_function;
    ++functions;
  }
  const double n = static_cast<double>(kept);
  const double mean = sum / n, sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  const double zscore = mean / (sd / std::sqrt(n));
  // One-sided test at the 1e-3 level.
  const bool pass = kept >= 100000 && violations == 0 && mean > 0 && zscore > 3.09;
  return {pass, fmt("%d functions, %ld of %ld pairs kept; re-evaluated violations of tau=0.001: %ld (min gap %.3e); "
                    "mean gap %.4f, sd %.4f, one-sided z=%.1f (need > 3.09)",
                    functions, kept, total, violations, min_gap, mean, sd, zscore)};
}

// ---------------------------------------------------------------- pipelines
RunConfig desk(const std::string& task, const fs::path& out, int repeats, const std::string& policy = "highest") {
  RunConfig cfg = RunConfig::for_task(task);
  apply_config_json(cfg, json{{"dim", 2},
                              {"n", 5000},
                              {"coverage", 50},
                              {"epochs", 20},
                              {"hidden", 256},
                              {"n-p", 256},
                              {"start-policy", policy},
                              {"repeats", repeats},
                              {"seed", 0},
                              {"out", out.string()}});
  return cfg;
}

std::string percentile_line(const json& agg) {
  const auto& n = agg["normalized"];
  return fmt("normalized p50 %.3f +/- %.3f, p80 %.3f +/- %.3f, p100 %.3f +/- %.3f", n["p50"]["mean"].get<double>(),
             n["p50"]["std"].get<double>(), n["p80"]["mean"].get<double>(), n["p80"]["std"].get<double>(),
             n["p100"]["mean"].get<double>(), n["p100"]["std"].get<double>());
}

struct DeskRun {
  PipelineResult result;
  double seconds = 0;
};

DeskRun run_desk(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  DeskRun r{run_pipeline(cfg), 0};
  r.seconds = seconds_since(t0);
  return r;
}

int wins(const PipelineResult& r, int first, bool strict) {
  int w = 0;
  for (int i = 0; i < first && i < static_cast<int>(r.runs.size()); ++i) {
    const auto& rep = r.runs[static_cast<std::size_t>(i)].report;
    w += strict ? rep.percentiles.p100 > rep.offline_best : rep.percentiles.p100 >= rep.offline_best;
  }
  return w;
}

Outcome default_fidelity(const fs::path& work) {
  RunConfig cfg = RunConfig::for_task("neg-ackley");
  cfg.repeats = 1;
  cfg.out_dir = work / "default_run";
  const auto t0 = Clock::now();
  run_pipeline(cfg);
  const double secs = seconds_since(t0);
  const json ledger = read_json(cfg.out_dir / "run_0" / "ledger.json");
  const auto& tr = ledger["training"];
  const auto& sa = ledger["sampling"];
  const long kernels = tr["kernel_configs_drawn"].get<long>();
  const long epochs = tr["epochs_completed"].get<long>();
  const long batch = tr["max_batch_size"].get<long>();
  const double lr = tr["learning_rate"].get<double>(), rho = tr["cond_dropout"].get<double>();
  const int steps = sa["denoise_steps_run"].get<int>();
  const double alpha = sa["target_scale"].get<double>(), beta = sa["guidance_weight"].get<double>();
  const int q = sa["candidates"].get<int>();
  const bool pass = kernels == 800 && epochs == 100 && batch == 64 && lr == 0.001 && rho == 0.15 && steps == 200 &&
                    alpha == 0.8 && beta == -1.5 && q == 128;
  return {pass, fmt("kernel configs %ld (800), epochs %ld (100), max batch %ld (64), lr %g, rho %g, denoise steps %d (200), "
                    "alpha %g, beta %g, Q %d; run took %.0f s",
                    kernels, epochs, batch, lr, rho, steps, alpha, beta, q, secs)};
}

Outcome guidance_identities() {
  RngStream rng(10);
  double worst0 = 0, worst1 = 0;
  for (int k = 0; k < 50; ++k) {
    const int d = 1 + k % 6;
    auto net = NoiseNetwork::initialize(d, 32, rng);
    net.parameters().layers.back().weight *= 100.0;
    const Eigen::VectorXd x = rng.normal_vector(d);
    const double tn = rng.uniform(0, 1);
    const Condition y{rng.normal(), rng.normal()};
    worst0 = std::max(worst0, (guided_noise(net, x, tn, y, 0.0) - net.forward(x, tn, y)).cwiseAbs().maxCoeff());
    worst1 = std::max(worst1, (guided_noise(net, x, tn, y, -1.0) - net.forward(x, tn, std::nullopt)).cwiseAbs().maxCoeff());
  }
  return {worst0 == 0.0 && worst1 == 0.0,
          fmt("50 random networks: |beta=0 - conditional| max %.1e, |beta=-1 - unconditional| max %.1e (both must be 0)",
              worst0, worst1)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work) {
  auto make = [&](const std::string& name) {
    RunConfig cfg = RunConfig::for_task("gp-landscape");
    apply_config_json(cfg, json{{"n", 1000}, {"epochs", 3}, {"hidden", 64}, {"n-p", 128}, {"repeats", 2},
                                {"seed", 11}, {"out", (work / name).string()}});
    return cfg;
  };
  run_pipeline(make("determinism_a"));
  run_pipeline(make("determinism_b"));
  bool identical = true;
  for (const char* run : {"run_0", "run_1"})
    for (const char* f : {"checkpoint.json", "report.json", "candidates.csv", "metrics.jsonl"})
      identical = identical && slurp(work / "determinism_a" / run / f) == slurp(work / "determinism_b" / run / f);
  identical = identical && slurp(work / "determinism_a" / "aggregate.json") == slurp(work / "determinism_b" / "aggregate.json");

  const fs::path ckpt = work / "determinism_a" / "run_1" / "checkpoint.json";
  const TrainedModel model = load_checkpoint(ckpt);
  save_checkpoint(model, work / "resaved.json");
  const TrainedModel again = load_checkpoint(work / "resaved.json");
  RngStream rng(12);
  bool forward_equal = slurp(ckpt) == slurp(work / "resaved.json");
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = rng.normal_vector(model.network.design_dim());
    const double tn = rng.uniform(0, 1);
    const std::optional<Condition> c =
        i % 2 ? std::optional<Condition>{} : std::optional<Condition>(Condition{rng.normal(), rng.normal()});
    forward_equal = forward_equal && model.network.forward(x, tn, c) == again.network.forward(x, tn, c);
  }
  return {identical && forward_equal,
          fmt("two seeded runs byte-identical (checkpoint, report, candidates, metrics, aggregate): %s; "
              "save/load/save byte-identical and 100 forward outputs bit-identical: %s",
              identical ? "yes" : "no", forward_equal ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "root_opt_acceptance";
  bool skip_default = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--work-dir") == 0 && i + 1 < argc) work = argv[++i];
    else if (std::strcmp(argv[i], "--skip-default-run") == 0) skip_default = true;
  }
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "bridge coefficient oracle equivalence", bridge_oracle);
  report(2, "forward/backward marginal consistency", marginal_consistency);
  report(3, "boundary pinning and OU small-stiffness limit", boundary_pinning);
  report(4, "gradient exactness", gradient_exactness);
  report(5, "synthetic pair validity", pair_validity);
  if (skip_default) {
    std::printf("SKIP [6] hyperparameter fidelity: --skip-default-run given\n");
    ++failures;
  } else {
    report(6, "hyperparameter fidelity", [&] { return default_fidelity(work); });
  }

  PipelineResult gp_highest;
  report(7, "end-to-end improvement, continuous", [&] {
    const DeskRun ackley = run_desk(desk("neg-ackley", work / "ackley", 8));
    const DeskRun gp = run_desk(desk("gp-landscape", work / "gp_highest", 8));
    gp_highest = gp.result;
    const int wa = wins(ackley.result, 5, true), wg = wins(gp.result, 5, true);
    const bool pass = wa >= 4 && wg >= 4 && ackley.seconds <= 600 && gp.seconds <= 600;
    return Outcome{pass, fmt("neg-ackley: p100 > offline best in %d/5 seeds, offline best %.4f, %s, %.0f s; "
                             "gp-landscape: %d/5, offline best %.4f, %s, %.0f s",
                             wa, ackley.result.runs[0].report.offline_best, percentile_line(ackley.result.aggregate).c_str(),
                             ackley.seconds, wg, gp.result.runs[0].report.offline_best,
                             percentile_line(gp.result.aggregate).c_str(), gp.seconds)};
  });

  report(8, "end-to-end improvement, discrete", [&] {
    RunConfig cfg = desk("onehot-additive", work / "onehot", 5);
    const DeskRun r = run_desk(cfg);
    double min_valid = 1.0;
    for (const auto& run : r.result.runs) min_valid = std::min(min_valid, run.report.valid_fraction);
    const int w = wins(r.result, 5, false);
    return Outcome{w >= 4 && min_valid == 1.0,
                   fmt("onehot-additive L=8 V=4: p100 >= offline best in %d/5 seeds (offline best %.4f, mean p100 %.4f); "
                       "minimum valid one-hot fraction %.3f",
                       w, r.result.runs[0].report.offline_best,
                       r.result.aggregate["percentiles"]["p100"]["mean"].get<double>(), min_valid)};
  });

  report(9, "ablation direction (start policy)", [&] {
    if (gp_highest.runs.empty()) gp_highest = run_desk(desk("gp-landscape", work / "gp_highest", 8)).result;
    const DeskRun lowest = run_desk(desk("gp-landscape", work / "gp_lowest", 8, "lowest"));
    const double hi = gp_highest.aggregate["percentiles"]["p100"]["mean"].get<double>();
    const double lo = lowest.result.aggregate["percentiles"]["p100"]["mean"].get<double>();
    return Outcome{hi >= lo, fmt("gp-landscape, 8 repeats: mean p100 highest %.4f vs lowest %.4f", hi, lo)};
  });

  report(10, "guidance identities", guidance_identities);
  report(11, "determinism and persistence", [&] { return determinism(work); });

  std::printf("%s: %d of 11 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
