#ifndef FEDBOOK_GRAPH_H_
#define FEDBOOK_GRAPH_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedbook/tensor.h"

namespace fedbook {

enum class LabelLevel { kNode, kEdge, kGraph };

std::string ToString(LabelLevel level);
LabelLevel ParseLabelLevel(const std::string& text);

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// A graph whose nodes (and optionally edges) carry dense feature vectors.
//
// Edges are stored as given but treated as undirected by message passing and
// by the dense adjacency. Exactly one label vector is populated, matching
// `level`: node_labels (node_count), edge_labels (edges.size()), or
// graph_labels (one entry for single-label, one 0/1 bit per label for
// multi-label tasks).
struct TextAttributedGraph {
  std::size_t node_count = 0;
  std::vector<Edge> edges;
  Tensor node_features;                 // node_count x d
  std::optional<Tensor> edge_features;  // edges.size() x d
  LabelLevel level = LabelLevel::kNode;
  std::vector<std::int64_t> node_labels;
  std::vector<std::int64_t> edge_labels;
  std::vector<std::int64_t> graph_labels;
  bool multilabel = false;

  std::size_t feature_dim() const { return node_features.cols(); }
  std::size_t edge_feature_dim() const {
    return edge_features ? edge_features->cols() : 0;
  }

  // Throws ValidationError on any broken invariant.
  void Validate() const;

  friend bool operator==(const TextAttributedGraph&,
                         const TextAttributedGraph&) = default;
};

// Symmetric 0/1 adjacency, n x n. A self loop sets its diagonal entry.
Tensor DenseAdjacency(const TextAttributedGraph& g);

// Row-normalized undirected neighbor-mean operator, n x n. Isolated nodes get
// a zero row.
Tensor NeighborMeanOperator(const TextAttributedGraph& g);

// Per-node mean of incident edge features, n x d_e. Zero rows for isolated
// nodes; empty when the graph has no edge features.
Tensor IncidentEdgeFeatureMean(const TextAttributedGraph& g);

// Subgraph induced by `nodes` (renumbered in the given order). Only edges with
// both endpoints inside are kept, with their features and labels.
TextAttributedGraph InducedSubgraph(const TextAttributedGraph& g,
                                    const std::vector<std::size_t>& nodes);

// Number of instances a client trains on: nodes, edges, or graphs.
std::size_t InstanceCount(const std::vector<TextAttributedGraph>& graphs);

// Line-record file format:
//   #tag d=<int> level=<node|edge|graph> [multilabel=1]
//   N <id> <f1> ... <fd> [label]
//   E <src> <dst> [<f1> ... <fd>] [label]
//   G <label...>
TextAttributedGraph LoadGraph(const std::filesystem::path& path);
TextAttributedGraph ParseGraph(std::istream& in);
void SaveGraph(const TextAttributedGraph& g, const std::filesystem::path& path);
void WriteGraph(const TextAttributedGraph& g, std::ostream& out);

}  // namespace fedbook

#endif  // FEDBOOK_GRAPH_H_
