#ifndef FEDBOOK_PARTITION_H_
#define FEDBOOK_PARTITION_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedbook/graph.h"

namespace fedbook {

// Maps each item (node or graph) to exactly one of `client_count` clients.
struct PartitionAssignment {
  std::size_t client_count = 0;
  std::vector<std::size_t> owner;

  // Item indices per client, ascending.
  std::vector<std::vector<std::size_t>> Members() const;
  std::vector<std::size_t> Sizes() const;

  friend bool operator==(const PartitionAssignment&,
                         const PartitionAssignment&) = default;
};

inline constexpr double kDefaultBalanceTolerance = 1.2;

// Greedy edge-cut partitioner standing in for METIS.
//
// Seeds: one seeded-random node, then repeatedly the node farthest (BFS hops,
// unreachable counts as farthest, ties to the lowest index) from the seeds
// chosen so far. Growth: at each step, among frontier nodes of parts still
// under capacity, attach the (node, part) pair that creates the fewest new
// cut edges, ties to the lowest node index, then the smaller part, then the
// lower part index. When no part has an unassigned neighbor, every
// unassigned node is a candidate. Capacity is
// max(ceil(n/k), floor(tolerance * ceil(n/k))). Parts are finally relabeled
// in order of their smallest node.
PartitionAssignment PartitionSubgraph(const TextAttributedGraph& g,
                                      std::size_t k, std::uint64_t seed,
                                      double balance_tolerance = kDefaultBalanceTolerance);

// Seeded shuffle followed by round-robin dealing; sizes differ by <= 1.
PartitionAssignment PartitionGraphLevel(std::size_t graph_count, std::size_t k,
                                        std::uint64_t seed);

// Edges whose endpoints land on different clients.
std::size_t CutSize(const TextAttributedGraph& g, const PartitionAssignment& p);

// One induced subgraph per client; cross-client edges are dropped.
std::vector<TextAttributedGraph> SplitByPartition(const TextAttributedGraph& g,
                                                  const PartitionAssignment& p);

}  // namespace fedbook

#endif  // FEDBOOK_PARTITION_H_
