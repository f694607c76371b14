#ifndef APP_PIPELINE_H_
#define APP_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "app/config.h"
#include "app/dataset.h"
#include "fedbook/checkpoint.h"
#include "fedbook/federation.h"
#include "fedbook/finetune.h"

namespace app {

inline constexpr const char* kRunManifestFile = "run_manifest.ini";
inline constexpr const char* kRoundsFile = "rounds.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.fbk";
inline constexpr const char* kHeadsFile = "heads.fbk";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kReportFile = "report.txt";

// Model configuration checked against the data: feature and edge-feature
// widths must match the config.
fedbook::ModelConfig ResolveModel(const RunConfig& config, const ClientDataset& data);

fedbook::PretrainResult Pretrain(const RunConfig& config, const ClientDataset& data);

// Writes the run manifest, the per-round CSV and the final checkpoint.
void WritePretrainOutputs(const RunConfig& config, const fedbook::PretrainResult& result,
                          const std::filesystem::path& dir);

// Fine-tuning seed of one client.
std::uint64_t ClientFinetuneSeed(const RunConfig& config, std::size_t client);

std::vector<fedbook::ClientEvaluation> FinetuneClients(const RunConfig& config,
                                                       const ClientDataset& data,
                                                       const fedbook::ParamSet& backbone);

struct ClientHeads {
  fedbook::PrototypeHead proto;
  fedbook::LinearHead linear;
};

fedbook::Checkpoint HeadsCheckpoint(const std::vector<fedbook::ClientEvaluation>& evals);
std::vector<ClientHeads> HeadsFromCheckpoint(const fedbook::Checkpoint& ckpt);

struct MetricRow {
  std::string run_id;
  std::size_t client_id = 0;
  fedbook::LabelLevel level = fedbook::LabelLevel::kNode;
  fedbook::Metric metric = fedbook::Metric::kAccuracy;
  double value = 0.0;
  std::uint64_t seed = 0;
};

// Scores every client's test split with saved heads. Splits are rebuilt
// from the same seeds used during fine-tuning.
std::vector<MetricRow> EvaluateClients(const RunConfig& config, const ClientDataset& data,
                                       const fedbook::ParamSet& backbone,
                                       const std::vector<ClientHeads>& heads);

void WriteMetricsCsv(const std::vector<MetricRow>& rows, std::ostream& out);

// Pretrain, fine-tune and test in memory.
struct EndToEndResult {
  std::vector<fedbook::RoundReport> rounds;
  std::vector<double> client_scores;
  double mean_score() const;
};
EndToEndResult RunEndToEnd(const RunConfig& config, const ClientDataset& data);

// Human-readable summary of an output directory's rounds and metrics.
std::string SummarizeRun(const std::filesystem::path& dir);

}  // namespace app

#endif  // APP_PIPELINE_H_
