#ifndef FEDBOOK_SYNTH_H_
#define FEDBOOK_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedbook/graph.h"

namespace fedbook {

struct DomainSpec {
  std::string name;
  std::vector<double> feature_center;  // length d, shared by every domain
  double intra_edge_prob = 0.2;        // same-class SBM block probability
  double inter_edge_prob = 0.02;       // cross-class SBM block probability
  int class_count = 2;
  std::size_t nodes_per_graph = 60;
};

struct SynthConfig {
  std::vector<DomainSpec> domains;
  std::size_t graphs_per_domain = 1;
  LabelLevel label_level = LabelLevel::kNode;
  double prototype_scale = 1.0;  // std of the per-class prototype vectors
  double noise_std = 0.5;
  bool edge_features = false;
  bool multilabel = false;  // graph level only

  void Validate() const;
};

struct DomainTag {
  std::size_t index = 0;
  std::string name;
  friend bool operator==(const DomainTag&, const DomainTag&) = default;
};

struct LabeledGraph {
  TextAttributedGraph graph;
  DomainTag domain;
};

// Stochastic-block-model graphs, `graphs_per_domain` per domain, in domain
// order. Node features are class prototype + domain center + Gaussian noise.
// Node classes are balanced (every class appears once nodes_per_graph >=
// class_count). Edge labels mark same-class endpoints. Single-label graphs
// take a dominant class; multi-label graphs carry the set of classes their
// nodes were drawn from.
std::vector<LabeledGraph> SynthMultidomain(const SynthConfig& config,
                                           std::uint64_t seed);

}  // namespace fedbook

#endif  // FEDBOOK_SYNTH_H_
