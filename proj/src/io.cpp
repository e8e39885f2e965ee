#include "root_opt/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "root_opt/error.hpp"
#include "root_opt/rng.hpp"

namespace root_opt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  return in;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write to '" + path.string() + "' failed");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, const fs::path& path) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw Error(ErrorCode::kIo, "malformed number '" + text + "' in '" + path.string() + "'");
  }
  return v;
}

void write_fingerprint_comment(std::ofstream& out, const std::string& fingerprint) {
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
}

json percentiles_json(const Percentiles& p) { return {{"p50", p.p50}, {"p80", p.p80}, {"p100", p.p100}}; }

Percentiles percentiles_from(const json& j) {
  return {j.at("p50").get<double>(), j.at("p80").get<double>(), j.at("p100").get<double>()};
}

std::uint64_t weights_checksum(const NetworkParameters& p) {
  std::string bytes;
  for (const auto& l : p.layers) {
    bytes.append(reinterpret_cast<const char*>(l.weight.data()), sizeof(double) * l.weight.size());
    bytes.append(reinterpret_cast<const char*>(l.bias.data()), sizeof(double) * l.bias.size());
  }
  return fnv1a64(bytes);
}

}  // namespace

void write_dataset_csv(const fs::path& path, const OfflineDataset& data, const std::string& fingerprint) {
  data.validate();
  auto out = open_out(path);
  write_fingerprint_comment(out, fingerprint);
  for (Eigen::Index k = 0; k < data.dim(); ++k) out << 'x' << k << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < data.dim(); ++k) out << fmt17(data.designs(i, k)) << ',';
    out << fmt17(data.scores[i]) << '\n';
  }
  finish(out, path);
}

OfflineDataset read_dataset_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.size() < 2 || header.back() != "y") {
    throw Error(ErrorCode::kIo, "'" + path.string() + "' lacks an x0,...,y header");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "x" + std::to_string(k)) {
      throw Error(ErrorCode::kIo, "unexpected column '" + header[k] + "' in '" + path.string() + "'");
    }
  }
  std::vector<double> values;
  long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) {
      throw Error(ErrorCode::kIo, "row " + std::to_string(rows + 1) + " of '" + path.string() +
                                      "' has the wrong number of cells");
    }
    for (const auto& c : cells) values.push_back(parse_double(c, path));
    ++rows;
  }
  OfflineDataset data;
  data.designs.resize(rows, static_cast<Eigen::Index>(d));
  data.scores.resize(rows);
  for (long i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < d; ++k) data.designs(i, static_cast<Eigen::Index>(k)) = values[i * (d + 1) + k];
    data.scores[i] = values[i * (d + 1) + d];
  }
  if (rows > 0) {
    data.normalization = ScoreNormalization::from_range(data.scores.minCoeff(), data.scores.maxCoeff(),
                                                        NormalizationMode::kDatasetRange);
  }
  return data;
}

void write_synthetic_csv(const fs::path& path, const SyntheticPairBatch& pairs, const std::string& fingerprint) {
  auto out = open_out(path);
  write_fingerprint_comment(out, fingerprint);
  const Eigen::Index d = pairs.low_designs.cols();
  out << "pair_id,role,function_id";
  for (Eigen::Index k = 0; k < d; ++k) out << ",x" << k;
  out << ",y\n";
  for (Eigen::Index i = 0; i < pairs.size(); ++i) {
    auto row = [&](const char* role, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
      out << i << ',' << role << ',' << pairs.function_ids[i];
      for (Eigen::Index k = 0; k < d; ++k) out << ',' << fmt17(X(i, k));
      out << ',' << fmt17(y[i]) << '\n';
    };
    row("low", pairs.low_designs, pairs.low_scores);
    row("high", pairs.high_designs, pairs.high_scores);
  }
  finish(out, path);
}

void write_candidates_csv(const fs::path& path, const CandidateSet& candidates, const EvalReport& report,
                          const std::string& fingerprint) {
  if (report.evaluated_designs.rows() != candidates.size()) {
    throw Error(ErrorCode::kShapeMismatch, "report and candidate set differ in size");
  }
  auto out = open_out(path);
  write_fingerprint_comment(out, fingerprint);
  const Eigen::Index d = report.evaluated_designs.cols();
  out << "rank,seed_index";
  for (Eigen::Index k = 0; k < d; ++k) out << ",x" << k;
  out << ",oracle_score,normalized_score\n";
  for (Eigen::Index i = 0; i < candidates.size(); ++i) {
    out << i + 1 << ',' << candidates.seed_indices[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << fmt17(report.evaluated_designs(i, k));
    out << ',' << fmt17(report.oracle_scores[i]) << ',' << fmt17(report.normalized_scores[i]) << '\n';
  }
  finish(out, path);
}

CandidateSet read_candidates_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.size() < 5 || header[0] != "rank" || header[1] != "seed_index" ||
      header[header.size() - 2] != "oracle_score" || header.back() != "normalized_score") {
    throw Error(ErrorCode::kIo, "'" + path.string() + "' is not a candidates file");
  }
  const std::size_t d = header.size() - 4;
  std::vector<std::vector<double>> rows;
  CandidateSet set;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw Error(ErrorCode::kIo, "ragged row in '" + path.string() + "'");
    set.seed_indices.push_back(static_cast<Eigen::Index>(parse_double(cells[1], path)));
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) x[k] = parse_double(cells[2 + k], path);
    rows.push_back(std::move(x));
  }
  set.designs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) set.designs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  set.conditions.resize(rows.size());
  return set;
}

void write_schedule_csv(const fs::path& path, const BridgeSchedule& s) {
  auto out = open_out(path);
  out << "t,m,kappa,u,v,w,kappa_tilde\n";
  for (int t = 0; t <= s.horizon; ++t) {
    out << t << ',' << fmt17(s.m[t]) << ',' << fmt17(s.kappa[t]) << ',' << fmt17(s.u[t]) << ','
        << fmt17(s.v[t]) << ',' << fmt17(s.w[t]) << ',' << fmt17(s.kappa_tilde[t]) << '\n';
  }
  finish(out, path);
}

json report_to_json(const EvalReport& r) {
  json normalized = percentiles_json(r.normalized);
  normalized["offline_best"] = r.normalized_offline_best;
  return {{"task", r.task},
          {"seed", r.seed},
          {"fingerprint", r.fingerprint},
          {"num_candidates", r.oracle_scores.size()},
          {"percentiles", percentiles_json(r.percentiles)},
          {"offline_best", r.offline_best},
          {"normalized", normalized},
          {"valid_fraction", r.valid_fraction}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fingerprint = j.value("fingerprint", std::string{});
    r.percentiles = percentiles_from(j.at("percentiles"));
    r.offline_best = j.at("offline_best").get<double>();
    r.normalized = percentiles_from(j.at("normalized"));
    r.normalized_offline_best = j.at("normalized").value("offline_best", 0.0);
    r.valid_fraction = j.value("valid_fraction", 1.0);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed report: ") + e.what());
  }
}

void write_report(const fs::path& path, const EvalReport& report) { write_json(path, report_to_json(report)); }

EvalReport read_report(const fs::path& path) { return report_from_json(read_json(path)); }

json epoch_to_json(const EpochStats& s, const std::string& fingerprint) {
  json j = {{"epoch", s.epoch}, {"mean_loss", s.mean_loss}, {"pairs_kept", s.pairs_kept},
            {"pairs_total", s.pairs_total}};
  if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
  return j;
}

MetricsWriter::MetricsWriter(const fs::path& path, std::string fingerprint)
    : out_(open_out(path)), fingerprint_(std::move(fingerprint)) {}

void MetricsWriter::write(const EpochStats& stats) {
  out_ << epoch_to_json(stats, fingerprint_).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kIo, "metrics write failed");
}

std::vector<json> read_metrics(const fs::path& path) {
  auto in = open_in(path);
  std::vector<json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIo, std::string("malformed metrics line: ") + e.what());
    }
  }
  return records;
}

json ledger_to_json(const RunLedger& l) {
  return {{"kernel_configs_drawn", l.kernel_configs_drawn},
          {"epochs_completed", l.epochs_completed},
          {"optimizer_steps", l.optimizer_steps},
          {"items_trained", l.items_trained},
          {"null_items", l.null_items},
          {"max_batch_size", l.max_batch_size},
          {"learning_rate", l.learning_rate},
          {"cond_dropout", l.cond_dropout},
          {"horizon", l.horizon},
          {"warnings", l.warnings}};
}

namespace {

RunLedger ledger_from_json(const json& j) {
  RunLedger l;
  l.kernel_configs_drawn = j.at("kernel_configs_drawn").get<long>();
  l.epochs_completed = j.at("epochs_completed").get<long>();
  l.optimizer_steps = j.at("optimizer_steps").get<long>();
  l.items_trained = j.at("items_trained").get<long>();
  l.null_items = j.at("null_items").get<long>();
  l.max_batch_size = j.at("max_batch_size").get<long>();
  l.learning_rate = j.at("learning_rate").get<double>();
  l.cond_dropout = j.at("cond_dropout").get<double>();
  l.horizon = j.at("horizon").get<int>();
  l.warnings = j.at("warnings").get<std::vector<std::string>>();
  return l;
}

}  // namespace

json checkpoint_to_json(const TrainedModel& model) {
  const auto& params = model.network.parameters();
  json layers = json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.weight.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), l.weight.rows(), l.weight.cols()) = l.weight;
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  const auto& s = *model.schedule;
  return {
      {"format", "root-opt-checkpoint"},
      {"format_version", kCheckpointFormatVersion},
      {"fingerprint", model.fingerprint},
      {"architecture",
       {{"design_dim", model.network.design_dim()},
        {"hidden_width", model.network.hidden_width()},
        {"layers", params.layers.size()},
        {"activation", "swish"},
        {"input_layout", {"x_t", "source_score", "target_score", "null_mask", "t_over_T"}}}},
      {"schedule", {{"kind", std::string(to_string(s.kind))}, {"horizon", s.horizon}, {"ou_stiffness", s.ou_stiffness}}},
      {"normalization",
       {{"offset", model.normalization.offset},
        {"scale", model.normalization.scale},
        {"mode", std::string(to_string(model.normalization.mode))}}},
      {"standardization", {{"mean", model.standardization.mean}, {"stddev", model.standardization.stddev}}},
      {"ledger", ledger_to_json(model.ledger)},
      {"weights_checksum", weights_checksum(params)},
      {"weights", layers}};
}

TrainedModel checkpoint_from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) {
    throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint has no format_version");
  }
  const auto version = j.at("format_version");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "unsupported checkpoint format_version " + version.dump() + " (expected " +
                    std::to_string(kCheckpointFormatVersion) + ")");
  }
  try {
    const auto& arch = j.at("architecture");
    const int d = arch.at("design_dim").get<int>();
    const int width = arch.at("hidden_width").get<int>();
    NetworkParameters params;
    for (const auto& lj : j.at("weights")) {
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw Error(ErrorCode::kCorruptCheckpoint, "layer arrays do not match their declared shape");
      }
      DenseLayer layer;
      layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), rows, cols);
      layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
      params.layers.push_back(std::move(layer));
    }
    const NoiseNetwork probe = NoiseNetwork::zeros(d, width);
    if (!probe.parameters().same_shape(params)) {
      throw Error(ErrorCode::kCorruptCheckpoint, "weights do not match the declared architecture");
    }
    if (j.at("weights_checksum").get<std::uint64_t>() != weights_checksum(params)) {
      throw Error(ErrorCode::kCorruptCheckpoint, "weight checksum mismatch");
    }

    const auto& sj = j.at("schedule");
    const BridgeKind kind = bridge_kind_from_string(sj.at("kind").get<std::string>());
    const int T = sj.at("horizon").get<int>();
    auto schedule = cached_schedule(kind, T, sj.at("ou_stiffness").get<double>());
    const int probes[] = {2, std::max(2, T / 2), T};
    const OracleCheck check = check_against_oracle(*schedule, probes);
    if (!check.passed(1e-10)) {
      throw Error(ErrorCode::kCorruptCheckpoint, "schedule failed re-validation at t=" +
                                                     std::to_string(check.worst_timestep));
    }

    const auto& nj = j.at("normalization");
    ScoreNormalization normalization{nj.at("offset").get<double>(), nj.at("scale").get<double>(),
                                     normalization_mode_from_string(nj.at("mode").get<std::string>())};
    if (!(normalization.scale > 0.0)) throw Error(ErrorCode::kCorruptCheckpoint, "normalization scale must be > 0");
    const auto& stj = j.at("standardization");
    ScoreStandardization standardization{stj.at("mean").get<double>(), stj.at("stddev").get<double>()};

    return TrainedModel{NoiseNetwork::from_parameters(d, std::move(params)),
                        std::move(schedule),
                        standardization,
                        normalization,
                        j.at("fingerprint").get<std::string>(),
                        ledger_from_json(j.at("ledger"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("checkpoint is malformed: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint || e.code() == ErrorCode::kVersionMismatch) throw;
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  }
}

void save_checkpoint(const TrainedModel& model, const fs::path& path) {
  auto out = open_out(path);
  out << checkpoint_to_json(model).dump() << '\n';
  finish(out, path);
}

TrainedModel load_checkpoint(const fs::path& path) {
  auto in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, "cannot parse '" + path.string() + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

json aggregate_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to aggregate");
  for (const auto& r : reports) {
    if (r.fingerprint != reports.front().fingerprint) {
      throw Error(ErrorCode::kFingerprintMismatch,
                  "reports carry different fingerprints (" + reports.front().fingerprint + " vs " +
                      r.fingerprint + ")");
    }
  }
  auto stats = [&](auto getter) {
    double mean = 0.0;
    for (const auto& r : reports) mean += getter(r);
    mean /= static_cast<double>(reports.size());
    double var = 0.0;
    for (const auto& r : reports) var += (getter(r) - mean) * (getter(r) - mean);
    var /= static_cast<double>(reports.size());
    return json{{"mean", mean}, {"std", std::sqrt(var)}};
  };
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.push_back(r.seed);
  return {{"fingerprint", reports.front().fingerprint},
          {"task", reports.front().task},
          {"repeats", reports.size()},
          {"seeds", seeds},
          {"percentiles",
           {{"p50", stats([](const EvalReport& r) { return r.percentiles.p50; })},
            {"p80", stats([](const EvalReport& r) { return r.percentiles.p80; })},
            {"p100", stats([](const EvalReport& r) { return r.percentiles.p100; })}}},
          {"normalized",
           {{"p50", stats([](const EvalReport& r) { return r.normalized.p50; })},
            {"p80", stats([](const EvalReport& r) { return r.normalized.p80; })},
            {"p100", stats([](const EvalReport& r) { return r.normalized.p100; })}}},
          {"offline_best", stats([](const EvalReport& r) { return r.offline_best; })}};
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "cannot parse '" + path.string() + "': " + e.what());
  }
}

}  // namespace root_opt
