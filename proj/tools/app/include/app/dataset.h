#ifndef APP_DATASET_H_
#define APP_DATASET_H_

#include <filesystem>
#include <vector>

#include "app/config.h"
#include "fedbook/graph.h"
#include "fedbook/synth.h"

namespace app {

// Per-client graph collections, indexed by client id.
struct ClientDataset {
  std::vector<std::vector<fedbook::TextAttributedGraph>> clients;
  std::vector<fedbook::DomainTag> domains;  // one per client

  std::size_t client_count() const { return clients.size(); }
};

// Domain of each client when `clients` are dealt to `domains` in contiguous
// blocks whose sizes differ by at most one.
std::vector<std::size_t> ClientDomains(std::size_t clients, std::size_t domains);

// One synthetic graph per domain split by the edge-cut partitioner (node and
// edge tasks), or a pool of small graphs per domain dealt round-robin (graph
// tasks).
ClientDataset SynthesizeClients(const RunConfig& config);

// Splits the graph file (node/edge tasks) or the directory of graph files
// (graph tasks) named by data.input across config.clients clients.
ClientDataset PartitionInput(const RunConfig& config);

// Directory layout: one file per graph plus manifest.txt with a header line
// `# clients=<K>` and one `<file> <client> <domain>` line per graph.
void SaveDataset(const ClientDataset& dataset, const std::filesystem::path& dir);
ClientDataset LoadDataset(const std::filesystem::path& dir);

// Synthesizes in memory or loads data.dataset_dir, depending on the source.
ClientDataset ResolveClients(const RunConfig& config);

}  // namespace app

#endif  // APP_DATASET_H_
