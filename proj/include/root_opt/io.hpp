#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "root_opt/bridge.hpp"
#include "root_opt/dataset.hpp"
#include "root_opt/sampler.hpp"
#include "root_opt/synthgen.hpp"
#include "root_opt/tasks.hpp"
#include "root_opt/trainer.hpp"

namespace root_opt {

inline constexpr int kCheckpointFormatVersion = 1;

// Scores and coordinates are written with 17 significant digits. A leading
// "# fingerprint=..." comment line is emitted when a fingerprint is given.
void write_dataset_csv(const std::filesystem::path& path, const OfflineDataset& data,
                       const std::string& fingerprint = {});
// Normalization is recomputed from the file's score range.
OfflineDataset read_dataset_csv(const std::filesystem::path& path);

void write_synthetic_csv(const std::filesystem::path& path, const SyntheticPairBatch& pairs,
                         const std::string& fingerprint = {});

void write_candidates_csv(const std::filesystem::path& path, const CandidateSet& candidates,
                          const EvalReport& report, const std::string& fingerprint = {});
// Reads designs and seed indices back; score columns are ignored.
CandidateSet read_candidates_csv(const std::filesystem::path& path);

// rows: t,m,kappa,u,v,w,kappa_tilde
void write_schedule_csv(const std::filesystem::path& path, const BridgeSchedule& s);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

nlohmann::json epoch_to_json(const EpochStats& stats, const std::string& fingerprint = {});

class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::string fingerprint);
  void write(const EpochStats& stats);

 private:
  std::ofstream out_;
  std::string fingerprint_;
};

std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

nlohmann::json ledger_to_json(const RunLedger& ledger);

nlohmann::json checkpoint_to_json(const TrainedModel& model);
TrainedModel checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// {fingerprint, task, repeats, seeds, percentiles:{p50:{mean,std},...},
//  normalized:{...}, offline_best}; population standard deviation.
// Throws FingerprintMismatch if the reports disagree.
nlohmann::json aggregate_reports(const std::vector<EvalReport>& reports);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace root_opt
