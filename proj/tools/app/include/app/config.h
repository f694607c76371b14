#ifndef APP_CONFIG_H_
#define APP_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "fedbook/federation.h"
#include "fedbook/finetune.h"
#include "fedbook/graph.h"
#include "fedbook/gvq_mae.h"

namespace app {

enum class DataSource { kSynth, kFiles };

std::string ToString(DataSource source);
DataSource ParseDataSource(const std::string& text);

// Where client datasets come from. With kSynth, domain d has a center of
// `center_scale` on axis d mod feature_dim, and clients are dealt to domains
// in contiguous blocks.
struct DataConfig {
  DataSource source = DataSource::kSynth;
  std::string dataset_dir;  // manifest directory, read by kFiles
  std::string input;        // graph file or directory fed to `partition`
  std::size_t domains = 2;
  int classes = 2;
  std::size_t nodes_per_client = 60;
  std::size_t graphs_per_client = 4;  // graph-level tasks only
  fedbook::LabelLevel level = fedbook::LabelLevel::kNode;
  bool edge_features = false;
  bool multilabel = false;
  double intra_edge_prob = 0.2;
  double inter_edge_prob = 0.02;
  double noise_std = 0.5;
  double prototype_scale = 1.0;
  double center_scale = 2.0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  fedbook::ModelConfig model;
  std::size_t clients = 6;
  fedbook::FederationConfig federation;
  DataConfig data;
  fedbook::TaskSpec task;
  fedbook::FinetuneConfig finetune;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string run_id = "run";

  // Throws fedbook::ConfigError on an inconsistent configuration.
  void Validate() const;

  // Seeds of the individual stages, all derived from `seed`.
  std::uint64_t data_seed() const;
  std::uint64_t federation_seed() const;
  std::uint64_t finetune_seed() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// INI text with [model], [federation], [optimizer], [data], [task],
// [finetune] and [run] sections. Missing keys keep their defaults; unknown
// keys are rejected.
RunConfig ParseRunConfig(std::istream& in);
RunConfig LoadRunConfig(const std::filesystem::path& path);
std::string SerializeRunConfig(const RunConfig& config);

}  // namespace app

#endif  // APP_CONFIG_H_
