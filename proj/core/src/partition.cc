#include "fedbook/partition.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "fedbook/errors.h"

namespace fedbook {

std::vector<std::vector<std::size_t>> PartitionAssignment::Members() const {
  std::vector<std::vector<std::size_t>> parts(client_count);
  for (std::size_t i = 0; i < owner.size(); ++i) parts[owner[i]].push_back(i);
  return parts;
}

std::vector<std::size_t> PartitionAssignment::Sizes() const {
  std::vector<std::size_t> sizes(client_count, 0);
  for (std::size_t o : owner) ++sizes[o];
  return sizes;
}

namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

std::vector<std::vector<std::size_t>> UndirectedNeighbors(const TextAttributedGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.node_count);
  for (const Edge& e : g.edges) {
    if (e.src == e.dst) continue;
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  return adj;
}

std::vector<std::size_t> ChooseSeeds(const std::vector<std::vector<std::size_t>>& adj,
                                     std::size_t k, std::uint64_t seed) {
  const std::size_t n = adj.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> seeds{pick(rng)};
  std::vector<char> chosen(n, 0);
  chosen[seeds[0]] = 1;
  while (seeds.size() < k) {
    std::vector<std::size_t> dist(n, kUnassigned);
    std::deque<std::size_t> queue;
    for (std::size_t s : seeds) {
      dist[s] = 0;
      queue.push_back(s);
    }
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adj[u]) {
        if (dist[v] == kUnassigned) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    std::size_t best = kUnassigned;
    for (std::size_t v = 0; v < n; ++v) {
      if (chosen[v]) continue;
      if (best == kUnassigned || dist[v] > dist[best]) best = v;
    }
    chosen[best] = 1;
    seeds.push_back(best);
  }
  return seeds;
}

}  // namespace

PartitionAssignment PartitionSubgraph(const TextAttributedGraph& g, std::size_t k,
                                      std::uint64_t seed, double balance_tolerance) {
  const std::size_t n = g.node_count;
  if (k == 0) throw ConfigError("partition needs k >= 1");
  if (k > n) {
    throw ConfigError("cannot split " + std::to_string(n) + " nodes into " +
                      std::to_string(k) + " clients");
  }
  if (balance_tolerance < 1.0) throw ConfigError("balance tolerance must be >= 1");

  const auto adj = UndirectedNeighbors(g);
  const std::size_t ideal = (n + k - 1) / k;
  const std::size_t capacity = std::max(
      ideal, static_cast<std::size_t>(std::floor(balance_tolerance * static_cast<double>(ideal))));

  std::vector<std::size_t> owner(n, kUnassigned);
  std::vector<std::size_t> sizes(k, 0);
  const auto seeds = ChooseSeeds(adj, k, seed);
  for (std::size_t p = 0; p < k; ++p) {
    owner[seeds[p]] = p;
    sizes[p] = 1;
  }

  // Count of v's assigned neighbors that sit in parts other than p.
  auto cost = [&](std::size_t v, std::size_t p) {
    std::size_t c = 0;
    for (std::size_t u : adj[v])
      if (owner[u] != kUnassigned && owner[u] != p) ++c;
    return c;
  };

  for (std::size_t assigned = k; assigned < n; ++assigned) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
    Key best{kUnassigned, kUnassigned, kUnassigned, kUnassigned};
    bool found = false;
    for (std::size_t v = 0; v < n; ++v) {
      if (owner[v] != kUnassigned) continue;
      for (std::size_t u : adj[v]) {
        const std::size_t p = owner[u];
        if (p == kUnassigned || sizes[p] >= capacity) continue;
        const Key key{cost(v, p), v, sizes[p], p};
        if (key < best) best = key;
        found = true;
      }
    }
    if (!found) {
      for (std::size_t v = 0; v < n; ++v) {
        if (owner[v] != kUnassigned) continue;
        for (std::size_t p = 0; p < k; ++p) {
          if (sizes[p] >= capacity) continue;
          const Key key{cost(v, p), v, sizes[p], p};
          if (key < best) best = key;
        }
      }
    }
    const std::size_t v = std::get<1>(best), p = std::get<3>(best);
    owner[v] = p;
    ++sizes[p];
  }

  // Relabel parts by their smallest member.
  std::vector<std::size_t> first(k, kUnassigned);
  for (std::size_t v = 0; v < n; ++v) first[owner[v]] = std::min(first[owner[v]], v);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return first[a] < first[b]; });
  std::vector<std::size_t> relabel(k);
  for (std::size_t i = 0; i < k; ++i) relabel[order[i]] = i;

  PartitionAssignment out;
  out.client_count = k;
  out.owner.resize(n);
  for (std::size_t v = 0; v < n; ++v) out.owner[v] = relabel[owner[v]];
  return out;
}

PartitionAssignment PartitionGraphLevel(std::size_t graph_count, std::size_t k,
                                        std::uint64_t seed) {
  if (graph_count == 0) throw ConfigError("no graphs to partition");
  if (k == 0 || k > graph_count) {
    throw ConfigError("cannot deal " + std::to_string(graph_count) + " graphs to " +
                      std::to_string(k) + " clients");
  }
  std::vector<std::size_t> order(graph_count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  PartitionAssignment out;
  out.client_count = k;
  out.owner.resize(graph_count);
  for (std::size_t i = 0; i < graph_count; ++i) out.owner[order[i]] = i % k;
  return out;
}

std::size_t CutSize(const TextAttributedGraph& g, const PartitionAssignment& p) {
  std::size_t cut = 0;
  for (const Edge& e : g.edges)
    if (p.owner[e.src] != p.owner[e.dst]) ++cut;
  return cut;
}

std::vector<TextAttributedGraph> SplitByPartition(const TextAttributedGraph& g,
                                                  const PartitionAssignment& p) {
  if (p.owner.size() != g.node_count) {
    throw ContractError("partition covers " + std::to_string(p.owner.size()) +
                        " nodes, graph has " + std::to_string(g.node_count));
  }
  std::vector<TextAttributedGraph> out;
  for (const auto& members : p.Members()) out.push_back(InducedSubgraph(g, members));
  return out;
}

}  // namespace fedbook
