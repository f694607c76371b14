#include "fedbook/synth.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "fedbook/errors.h"

namespace fedbook {

void SynthConfig::Validate() const {
  if (domains.empty()) throw ConfigError("synth config has no domains");
  if (graphs_per_domain == 0) throw ConfigError("graphs_per_domain must be >= 1");
  const std::size_t d = domains.front().feature_center.size();
  if (d == 0) throw ConfigError("feature_center must be non-empty");
  for (const auto& dom : domains) {
    if (dom.feature_center.size() != d) {
      throw ConfigError("domain '" + dom.name + "' feature_center has length " +
                        std::to_string(dom.feature_center.size()) + ", expected " +
                        std::to_string(d));
    }
    auto valid_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!valid_prob(dom.intra_edge_prob) || !valid_prob(dom.inter_edge_prob)) {
      throw ConfigError("domain '" + dom.name + "' edge probability outside [0,1]");
    }
    if (dom.class_count < 2) {
      throw ConfigError("domain '" + dom.name + "' needs class_count >= 2");
    }
    if (dom.nodes_per_graph == 0) throw ConfigError("nodes_per_graph must be >= 1");
  }
  if (multilabel && label_level != LabelLevel::kGraph) {
    throw ConfigError("multilabel applies to graph-level labels only");
  }
  if (noise_std < 0.0 || prototype_scale < 0.0) throw ConfigError("negative std");
}

namespace {

std::vector<std::int64_t> NodeClasses(std::size_t n, int classes, std::mt19937_64& rng) {
  std::vector<std::int64_t> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = static_cast<std::int64_t>(i % classes);
  std::shuffle(cls.begin(), cls.end(), rng);
  return cls;
}

}  // namespace

std::vector<LabeledGraph> SynthMultidomain(const SynthConfig& config,
                                           std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = config.domains.front().feature_center.size();

  std::vector<LabeledGraph> out;
  for (std::size_t di = 0; di < config.domains.size(); ++di) {
    const DomainSpec& dom = config.domains[di];
    const auto classes = static_cast<std::size_t>(dom.class_count);
    std::vector<std::vector<double>> prototypes(classes, std::vector<double>(d));
    for (auto& p : prototypes)
      for (double& v : p) v = config.prototype_scale * gauss(rng);

    for (std::size_t gi = 0; gi < config.graphs_per_domain; ++gi) {
      const std::size_t n = dom.nodes_per_graph;
      TextAttributedGraph g;
      g.level = config.label_level;
      g.node_count = n;

      std::vector<std::int64_t> cls;
      if (config.label_level != LabelLevel::kGraph) {
        cls = NodeClasses(n, dom.class_count, rng);
      } else if (config.multilabel) {
        std::vector<std::int64_t> active;
        while (active.empty()) {
          for (std::size_t c = 0; c < classes; ++c)
            if (unit(rng) < 0.5) active.push_back(static_cast<std::int64_t>(c));
        }
        std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
        for (std::size_t v = 0; v < n; ++v) cls.push_back(active[pick(rng)]);
        g.multilabel = true;
        g.graph_labels.assign(classes, 0);
        for (auto c : active) g.graph_labels[c] = 1;
      } else {
        const auto dominant = static_cast<std::int64_t>(gi % classes);
        std::uniform_int_distribution<std::int64_t> any(0, dom.class_count - 1);
        for (std::size_t v = 0; v < n; ++v) cls.push_back(unit(rng) < 0.6 ? dominant : any(rng));
        g.graph_labels = {dominant};
      }

      g.node_features = Tensor({n, d});
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < d; ++c)
          g.node_features(v, c) =
              prototypes[cls[v]][c] + dom.feature_center[c] + config.noise_std * gauss(rng);

      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
          const double p = cls[u] == cls[v] ? dom.intra_edge_prob : dom.inter_edge_prob;
          if (unit(rng) < p) {
            g.edges.push_back({u, v});
            if (config.label_level == LabelLevel::kEdge)
              g.edge_labels.push_back(cls[u] == cls[v] ? 1 : 0);
          }
        }
      }
      if (config.edge_features) {
        Tensor ef({g.edges.size(), d});
        for (std::size_t e = 0; e < g.edges.size(); ++e)
          for (std::size_t c = 0; c < d; ++c)
            ef(e, c) = 0.5 * (g.node_features(g.edges[e].src, c) +
                              g.node_features(g.edges[e].dst, c));
        g.edge_features = std::move(ef);
      }
      if (config.label_level == LabelLevel::kNode) g.node_labels = std::move(cls);
      g.Validate();
      out.push_back({std::move(g), DomainTag{di, dom.name}});
    }
  }
  return out;
}

}  // namespace fedbook
