#include "app/dataset.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "fedbook/errors.h"
#include "fedbook/partition.h"

namespace app {

using fedbook::ConfigError;
using fedbook::TextAttributedGraph;

std::vector<std::size_t> ClientDomains(std::size_t clients, std::size_t domains) {
  std::vector<std::size_t> out(clients);
  for (std::size_t k = 0; k < clients; ++k) out[k] = k * domains / clients;
  return out;
}

namespace {

fedbook::DomainSpec MakeDomain(const DataConfig& data, std::size_t feature_dim, std::size_t index,
                               std::size_t nodes) {
  fedbook::DomainSpec spec;
  spec.name = "domain" + std::to_string(index);
  spec.feature_center.assign(feature_dim, 0.0);
  spec.feature_center[index % feature_dim] = data.center_scale;
  spec.intra_edge_prob = data.intra_edge_prob;
  spec.inter_edge_prob = data.inter_edge_prob;
  spec.class_count = data.classes;
  spec.nodes_per_graph = nodes;
  return spec;
}

}  // namespace

ClientDataset SynthesizeClients(const RunConfig& config) {
  const DataConfig& data = config.data;
  const auto owner = ClientDomains(config.clients, data.domains);
  ClientDataset out;
  out.clients.resize(config.clients);
  out.domains.resize(config.clients);
  std::mt19937_64 seeds(config.data_seed());
  for (std::size_t dom = 0; dom < data.domains; ++dom) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < config.clients; ++k)
      if (owner[k] == dom) members.push_back(k);
    const std::size_t c = members.size();
    const bool graph_level = data.level == fedbook::LabelLevel::kGraph;

    fedbook::SynthConfig synth;
    synth.domains.push_back(MakeDomain(data, config.model.feature_dim, dom,
                                       graph_level ? data.nodes_per_client
                                                   : data.nodes_per_client * c));
    synth.graphs_per_domain = graph_level ? data.graphs_per_client * c : 1;
    synth.label_level = data.level;
    synth.prototype_scale = data.prototype_scale;
    synth.noise_std = data.noise_std;
    synth.edge_features = data.edge_features;
    synth.multilabel = data.multilabel;
    const std::uint64_t synth_seed = seeds();
    const std::uint64_t split_seed = seeds();
    auto graphs = fedbook::SynthMultidomain(synth, synth_seed);
    const fedbook::DomainTag tag{dom, synth.domains.front().name};

    if (graph_level) {
      const auto parts = fedbook::PartitionGraphLevel(graphs.size(), c, split_seed);
      for (std::size_t gi = 0; gi < graphs.size(); ++gi)
        out.clients[members[parts.owner[gi]]].push_back(std::move(graphs[gi].graph));
    } else {
      const auto& g = graphs.front().graph;
      const auto parts = fedbook::PartitionSubgraph(g, c, split_seed);
      auto pieces = fedbook::SplitByPartition(g, parts);
      for (std::size_t p = 0; p < c; ++p) out.clients[members[p]].push_back(std::move(pieces[p]));
    }
    for (std::size_t k : members) out.domains[k] = tag;
  }
  return out;
}

ClientDataset PartitionInput(const RunConfig& config) {
  const std::filesystem::path input = config.data.input;
  if (input.empty()) throw ConfigError("data.input must name a graph file or directory");
  ClientDataset out;
  out.clients.resize(config.clients);
  out.domains.assign(config.clients, fedbook::DomainTag{0, input.stem().string()});
  if (std::filesystem::is_directory(input)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(input))
      if (entry.is_regular_file() && entry.path().extension() == ".graph") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .graph files in " + input.string());
    const auto parts = fedbook::PartitionGraphLevel(files.size(), config.clients, config.data_seed());
    for (std::size_t i = 0; i < files.size(); ++i)
      out.clients[parts.owner[i]].push_back(fedbook::LoadGraph(files[i]));
  } else {
    if (!std::filesystem::is_regular_file(input)) {
      throw ConfigError("data.input '" + input.string() + "' does not exist");
    }
    const TextAttributedGraph g = fedbook::LoadGraph(input);
    const auto parts = fedbook::PartitionSubgraph(g, config.clients, config.data_seed());
    auto pieces = fedbook::SplitByPartition(g, parts);
    for (std::size_t k = 0; k < config.clients; ++k) out.clients[k].push_back(std::move(pieces[k]));
  }
  return out;
}

void SaveDataset(const ClientDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  manifest << "# clients=" << dataset.client_count() << "\n";
  for (std::size_t k = 0; k < dataset.client_count(); ++k) {
    for (std::size_t g = 0; g < dataset.clients[k].size(); ++g) {
      const std::string name = "client" + std::to_string(k) + "_g" + std::to_string(g) + ".graph";
      fedbook::SaveGraph(dataset.clients[k][g], dir / name);
      manifest << name << ' ' << k << ' ' << dataset.domains[k].name << "\n";
    }
  }
}

ClientDataset LoadDataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset manifest " + path.string() + " not found");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("# clients=", 0) != 0) {
    throw fedbook::ParseError(line_no, "manifest must start with '# clients=<K>'");
  }
  std::size_t clients = 0;
  try {
    clients = std::stoul(line.substr(10));
  } catch (const std::exception&) {
    throw fedbook::ParseError(line_no, "bad client count '" + line.substr(10) + "'");
  }
  ClientDataset out;
  out.clients.resize(clients);
  out.domains.resize(clients);
  std::map<std::string, std::size_t> domain_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string file, domain;
    long long client = -1;
    if (!(ss >> file >> client >> domain) || client < 0) {
      throw fedbook::ParseError(line_no, "expected '<file> <client> <domain>'");
    }
    if (static_cast<std::size_t>(client) >= clients) {
      throw fedbook::ParseError(line_no, "client " + std::to_string(client) + " outside 0.." +
                                             std::to_string(clients - 1));
    }
    const auto id = domain_ids.emplace(domain, domain_ids.size()).first->second;
    out.clients[client].push_back(fedbook::LoadGraph(dir / file));
    out.domains[client] = fedbook::DomainTag{id, domain};
  }
  for (std::size_t k = 0; k < clients; ++k)
    if (out.clients[k].empty()) throw ConfigError("client " + std::to_string(k) + " has no graphs");
  return out;
}

ClientDataset ResolveClients(const RunConfig& config) {
  if (config.data.source == DataSource::kSynth) return SynthesizeClients(config);
  ClientDataset data = LoadDataset(config.data.dataset_dir);
  if (data.client_count() != config.clients) {
    throw ConfigError("dataset has " + std::to_string(data.client_count()) +
                      " clients, config asks for " + std::to_string(config.clients));
  }
  return data;
}

}  // namespace app
