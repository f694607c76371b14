#include "app/pipeline.h"

#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fedbook/errors.h"
#include "fedbook/text_format.h"

namespace app {

using fedbook::ConfigError;

fedbook::ModelConfig ResolveModel(const RunConfig& config, const ClientDataset& data) {
  fedbook::ModelConfig model = config.model;
  for (std::size_t k = 0; k < data.client_count(); ++k) {
    for (const auto& g : data.clients[k]) {
      if (g.feature_dim() != model.feature_dim) {
        throw ConfigError("client " + std::to_string(k) + " has feature dim " +
                          std::to_string(g.feature_dim()) + ", model.feature_dim is " +
                          std::to_string(model.feature_dim));
      }
      if (g.edge_feature_dim() != model.edge_feature_dim) {
        throw ConfigError("client " + std::to_string(k) + " has edge feature dim " +
                          std::to_string(g.edge_feature_dim()) + ", model.edge_feature_dim is " +
                          std::to_string(model.edge_feature_dim));
      }
      if (g.level != config.data.level) {
        throw ConfigError("client " + std::to_string(k) + " carries " +
                          fedbook::ToString(g.level) + " labels, config expects " +
                          fedbook::ToString(config.data.level));
      }
    }
  }
  return model;
}

fedbook::PretrainResult Pretrain(const RunConfig& config, const ClientDataset& data) {
  const fedbook::ModelConfig model = ResolveModel(config, data);
  fedbook::FederationConfig fed = config.federation;
  fed.seed = config.federation_seed();
  return fedbook::RunPretraining(data.clients, model, fed);
}

void WritePretrainOutputs(const RunConfig& config, const fedbook::PretrainResult& result,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kRunManifestFile);
    out << SerializeRunConfig(config) << "\n[resolved]\n"
        << "data_seed = " << config.data_seed() << "\n"
        << "federation_seed = " << config.federation_seed() << "\n"
        << "finetune_seed = " << config.finetune_seed() << "\n"
        << "scheme = " << fedbook::ToString(config.federation.scheme) << "\n";
  }
  {
    std::ofstream out(dir / kRoundsFile);
    fedbook::WriteRoundCsvHeader(out);
    for (const auto& r : result.reports) fedbook::WriteRoundCsvRow(out, r);
  }
  fedbook::Checkpoint ckpt;
  ckpt.params = result.global;
  ckpt.metadata = {{"run_id", config.run_id},
                   {"scheme", fedbook::ToString(config.federation.scheme)},
                   {"seed", std::to_string(config.seed)},
                   {"rounds", std::to_string(result.reports.size())},
                   {"lambda", fedbook::FormatDouble(config.federation.lambda)}};
  fedbook::SaveCheckpoint(ckpt, dir / kCheckpointFile);
}

std::uint64_t ClientFinetuneSeed(const RunConfig& config, std::size_t client) {
  std::mt19937_64 rng(config.finetune_seed());
  rng.discard(client);
  return rng();
}

namespace {

fedbook::FinetuneConfig ClientConfig(const RunConfig& config, std::size_t client) {
  fedbook::FinetuneConfig ft = config.finetune;
  ft.seed = ClientFinetuneSeed(config, client);
  return ft;
}

}  // namespace

std::vector<fedbook::ClientEvaluation> FinetuneClients(const RunConfig& config,
                                                       const ClientDataset& data,
                                                       const fedbook::ParamSet& backbone) {
  std::vector<fedbook::ClientEvaluation> out;
  for (std::size_t k = 0; k < data.client_count(); ++k) {
    out.push_back(fedbook::EvaluateClient(k, data.clients[k], backbone, config.task,
                                          ClientConfig(config, k)));
  }
  return out;
}

namespace {

std::string Key(std::size_t client, const char* part) {
  return "client" + std::to_string(client) + "." + part;
}

}  // namespace

fedbook::Checkpoint HeadsCheckpoint(const std::vector<fedbook::ClientEvaluation>& evals) {
  fedbook::Checkpoint ckpt;
  ckpt.metadata["clients"] = std::to_string(evals.size());
  for (const auto& e : evals) {
    const auto& h = e.heads;
    ckpt.params[Key(e.client_id, "proto")] = h.proto.prototypes;
    if (!h.proto.negative_prototypes.empty())
      ckpt.params[Key(e.client_id, "proto_negative")] = h.proto.negative_prototypes;
    if (!h.proto.fallback.empty())
      ckpt.params[Key(e.client_id, "proto_fallback")] = fedbook::Tensor::Vector(h.proto.fallback);
    ckpt.params[Key(e.client_id, "linear.weight")] = h.linear.weight;
    ckpt.params[Key(e.client_id, "linear.bias")] = h.linear.bias;
  }
  return ckpt;
}

std::vector<ClientHeads> HeadsFromCheckpoint(const fedbook::Checkpoint& ckpt) {
  const auto it = ckpt.metadata.find("clients");
  if (it == ckpt.metadata.end()) throw fedbook::ValidationError("heads file lacks a client count");
  const std::size_t clients = std::stoul(it->second);
  std::vector<ClientHeads> out(clients);
  auto take = [&](std::size_t k, const char* part) -> const fedbook::Tensor* {
    auto p = ckpt.params.find(Key(k, part));
    return p == ckpt.params.end() ? nullptr : &p->second;
  };
  for (std::size_t k = 0; k < clients; ++k) {
    const auto* proto = take(k, "proto");
    const auto* w = take(k, "linear.weight");
    const auto* b = take(k, "linear.bias");
    if (!proto || !w || !b) {
      throw fedbook::ValidationError("heads file misses client " + std::to_string(k));
    }
    out[k].proto.prototypes = *proto;
    if (const auto* neg = take(k, "proto_negative")) out[k].proto.negative_prototypes = *neg;
    if (const auto* fb = take(k, "proto_fallback"))
      out[k].proto.fallback.assign(fb->data().begin(), fb->data().end());
    out[k].linear.weight = *w;
    out[k].linear.bias = *b;
  }
  return out;
}

std::vector<MetricRow> EvaluateClients(const RunConfig& config, const ClientDataset& data,
                                       const fedbook::ParamSet& backbone,
                                       const std::vector<ClientHeads>& heads) {
  if (heads.size() != data.client_count()) {
    throw ConfigError("heads cover " + std::to_string(heads.size()) + " clients, dataset has " +
                      std::to_string(data.client_count()));
  }
  std::vector<MetricRow> rows;
  for (std::size_t k = 0; k < data.client_count(); ++k) {
    const auto set = fedbook::CollectInstances(data.clients[k], backbone, config.task.level);
    const std::uint64_t seed = ClientFinetuneSeed(config, k);
    const auto split = fedbook::MakeSplit(set, config.task, seed);
    MetricRow row;
    row.run_id = config.run_id;
    row.client_id = k;
    row.level = config.task.level;
    row.metric = config.task.metric;
    row.value = fedbook::Score(set, split.test, heads[k].proto, heads[k].linear, config.task.metric);
    row.seed = config.seed;
    rows.push_back(row);
  }
  return rows;
}

void WriteMetricsCsv(const std::vector<MetricRow>& rows, std::ostream& out) {
  out << "run_id,client_id,level,metric,value,seed\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.client_id << ',' << fedbook::ToString(r.level) << ','
        << fedbook::ToString(r.metric) << ',' << fedbook::FormatDouble(r.value) << ',' << r.seed
        << '\n';
  }
}

double EndToEndResult::mean_score() const {
  if (client_scores.empty()) return 0.0;
  return std::accumulate(client_scores.begin(), client_scores.end(), 0.0) /
         static_cast<double>(client_scores.size());
}

EndToEndResult RunEndToEnd(const RunConfig& config, const ClientDataset& data) {
  auto pre = Pretrain(config, data);
  EndToEndResult out;
  out.rounds = std::move(pre.reports);
  for (const auto& e : FinetuneClients(config, data, pre.global)) out.client_scores.push_back(e.score);
  return out;
}

namespace {

std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string SummarizeRun(const std::filesystem::path& dir) {
  std::ostringstream out;
  const auto rounds_path = dir / kRoundsFile;
  const auto metrics_path = dir / kMetricsFile;
  if (!std::filesystem::exists(rounds_path) && !std::filesystem::exists(metrics_path)) {
    throw ConfigError("no " + std::string(kRoundsFile) + " or " + kMetricsFile + " in " +
                      dir.string());
  }
  if (std::filesystem::exists(rounds_path)) {
    out << "round  stage   mean_loss\n";
    for (const auto& row : ReadCsv(rounds_path)) {
      if (row.size() < 3) throw fedbook::ValidationError("malformed row in " + rounds_path.string());
      out << row[0] << std::string(7 - std::min<std::size_t>(6, row[0].size()), ' ') << row[1]
          << std::string(8 - std::min<std::size_t>(7, row[1].size()), ' ') << row[2] << "\n";
    }
  }
  if (std::filesystem::exists(metrics_path)) {
    std::map<std::string, std::pair<double, std::size_t>> by_metric;
    for (const auto& row : ReadCsv(metrics_path)) {
      if (row.size() < 6) throw fedbook::ValidationError("malformed row in " + metrics_path.string());
      auto& [sum, count] = by_metric[row[2] + " " + row[3]];
      sum += std::stod(row[4]);
      ++count;
    }
    for (const auto& [name, acc] : by_metric) {
      out << name << ": mean " << fedbook::FormatDouble(acc.first / static_cast<double>(acc.second))
          << " over " << acc.second << " clients\n";
    }
  }
  return out.str();
}

}  // namespace app
