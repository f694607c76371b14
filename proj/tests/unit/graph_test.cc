#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fedbook/errors.h"
#include "fedbook/graph.h"
#include "fedbook/partition.h"
#include "fedbook/synth.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fedbook {
namespace {

using testing::RandomTensor;

TextAttributedGraph Parse(const std::string& text) {
  std::istringstream in(text);
  return ParseGraph(in);
}

TEST(GraphFileTest, ParsesTwoNodeGraph) {
  const auto g = Parse(
      "#tag d=2 level=node\n"
      "N 0 0.5 1.5 0\n"
      "N 1 -1 2 1\n"
      "E 0 1\n");
  EXPECT_EQ(g.node_count, 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0], (Edge{0, 1}));
  EXPECT_EQ(g.node_features, Tensor::Matrix({{0.5, 1.5}, {-1, 2}}));
  EXPECT_EQ(g.node_labels, (std::vector<std::int64_t>{0, 1}));
}

TEST(GraphFileTest, EdgeToMissingNodeIsValidationError) {
  EXPECT_THROW(Parse("#tag d=1 level=node\nN 0 1 0\nN 1 1 0\nN 2 1 0\nE 0 99\n"),
               ValidationError);
}

TEST(GraphFileTest, MalformedRecordReportsLine) {
  try {
    Parse("#tag d=2 level=node\nN 0 1 2 0\nN 1 1 oops 0\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(Parse("N 0 1 0\n"), ParseError);
  EXPECT_THROW(Parse("#tag d=1 level=node\nX 1\n"), ParseError);
  EXPECT_THROW(Parse("#tag d=1 level=planet\n"), ParseError);
}

TEST(GraphFileTest, SaveLoadRoundTripsEdgeLevelGraphWithFeatures) {
  std::mt19937_64 rng(21);
  TextAttributedGraph g;
  g.node_count = 4;
  g.level = LabelLevel::kEdge;
  g.edges = {{0, 1}, {1, 2}, {3, 3}, {2, 0}};
  g.node_features = RandomTensor({4, 3}, rng);
  g.edge_features = RandomTensor({4, 3}, rng);
  g.edge_labels = {1, 0, 1, 1};
  const auto dir = testing::ScratchDir("graph_roundtrip");
  SaveGraph(g, dir / "g.graph");
  EXPECT_EQ(LoadGraph(dir / "g.graph"), g);
}

TEST(GraphFileTest, SaveLoadRoundTripsMultilabelGraph) {
  std::mt19937_64 rng(22);
  TextAttributedGraph g = testing::PathGraph(5, 2, rng);
  g.level = LabelLevel::kGraph;
  g.node_labels.clear();
  g.graph_labels = {1, 0, 1};
  g.multilabel = true;
  std::stringstream buf;
  WriteGraph(g, buf);
  EXPECT_EQ(ParseGraph(buf), g);
}

TEST(GraphTest, AdjacencyIsSymmetricWithSelfLoopOnDiagonal) {
  std::mt19937_64 rng(1);
  TextAttributedGraph g = testing::PathGraph(3, 2, rng);
  g.edges.push_back({2, 2});
  const Tensor a = DenseAdjacency(g);
  EXPECT_EQ(a, Tensor::Matrix({{0, 1, 0}, {1, 0, 1}, {0, 1, 1}}));
}

TEST(GraphTest, NeighborMeanRowsAreNormalizedOrZero) {
  std::mt19937_64 rng(2);
  TextAttributedGraph g = testing::PathGraph(4, 2, rng);
  g.node_count = 5;
  g.node_features = RandomTensor({5, 2}, rng);
  g.node_labels.push_back(0);
  g.edges.push_back({0, 1});  // duplicate counts twice
  const Tensor m = NeighborMeanOperator(g);
  EXPECT_DOUBLE_EQ(m(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m(1, 2), 1.0 / 3.0);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(m(4, c), 0.0);
}

TEST(GraphTest, InducedSubgraphKeepsInternalEdgesOnly) {
  std::mt19937_64 rng(3);
  const TextAttributedGraph g = testing::PathGraph(5, 2, rng);
  const auto sub = InducedSubgraph(g, {3, 2, 4});
  EXPECT_EQ(sub.node_count, 3u);
  EXPECT_EQ(sub.edges, (std::vector<Edge>{{1, 0}, {0, 2}}));
  EXPECT_EQ(sub.node_labels, (std::vector<std::int64_t>{1, 0, 0}));
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(sub.node_features(0, c), g.node_features(3, c));
}

TEST(GraphTest, InstanceCountFollowsLevel) {
  std::mt19937_64 rng(4);
  TextAttributedGraph g = testing::PathGraph(4, 2, rng);
  EXPECT_EQ(InstanceCount({g, g}), 8u);
  g.level = LabelLevel::kEdge;
  g.node_labels.clear();
  g.edge_labels = {0, 1, 0};
  EXPECT_EQ(InstanceCount({g}), 3u);
  g.level = LabelLevel::kGraph;
  g.edge_labels.clear();
  g.graph_labels = {1};
  EXPECT_EQ(InstanceCount({g, g, g}), 3u);
}

SynthConfig TwoDomains(std::size_t d) {
  SynthConfig c;
  for (std::size_t k = 0; k < 2; ++k) {
    DomainSpec dom;
    dom.name = "d" + std::to_string(k);
    dom.feature_center.assign(d, 0.0);
    dom.feature_center[k] = 4.0;
    dom.nodes_per_graph = 40;
    c.domains.push_back(dom);
  }
  return c;
}

TEST(SynthTest, InterDomainSimilarityBelowIntraDomain) {
  const auto graphs = SynthMultidomain(TwoDomains(8), 5);
  ASSERT_EQ(graphs.size(), 2u);
  auto mean_cos = [](const Tensor& a, const Tensor& b, bool same) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.rows(); ++j) {
        if (same && i == j) continue;
        s += Cosine(a.row(i), b.row(j));
        ++n;
      }
    return s / static_cast<double>(n);
  };
  const Tensor& x0 = graphs[0].graph.node_features;
  const Tensor& x1 = graphs[1].graph.node_features;
  const double intra = 0.5 * (mean_cos(x0, x0, true) + mean_cos(x1, x1, true));
  EXPECT_LT(mean_cos(x0, x1, false), intra);
}

TEST(SynthTest, SameSeedIsBitIdentical) {
  SynthConfig c = TwoDomains(4);
  c.edge_features = true;
  const auto a = SynthMultidomain(c, 9), b = SynthMultidomain(c, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].graph, b[i].graph);
    EXPECT_EQ(a[i].domain, b[i].domain);
  }
  EXPECT_NE(SynthMultidomain(c, 10)[0].graph, a[0].graph);
}

TEST(SynthTest, InvalidConfigRejected) {
  SynthConfig c = TwoDomains(4);
  c.domains[0].class_count = 1;
  EXPECT_THROW(SynthMultidomain(c, 1), ConfigError);
  c = TwoDomains(4);
  c.domains[1].intra_edge_prob = 1.5;
  EXPECT_THROW(SynthMultidomain(c, 1), ConfigError);
  c = TwoDomains(4);
  c.multilabel = true;
  EXPECT_THROW(SynthMultidomain(c, 1), ConfigError);
}

TEST(SynthTest, EveryClassAppears) {
  SynthConfig c = TwoDomains(4);
  for (auto& d : c.domains) {
    d.class_count = 4;
    d.nodes_per_graph = 40;
  }
  for (const auto& lg : SynthMultidomain(c, 3)) {
    const std::set<std::int64_t> seen(lg.graph.node_labels.begin(), lg.graph.node_labels.end());
    EXPECT_EQ(seen, (std::set<std::int64_t>{0, 1, 2, 3}));
  }
}

TEST(SynthTest, GraphLevelAndEdgeLevelLabels) {
  SynthConfig c = TwoDomains(4);
  c.graphs_per_domain = 3;
  c.label_level = LabelLevel::kGraph;
  c.multilabel = true;
  const auto graphs = SynthMultidomain(c, 4);
  EXPECT_EQ(graphs.size(), 6u);
  for (const auto& lg : graphs) {
    EXPECT_TRUE(lg.graph.multilabel);
    EXPECT_EQ(lg.graph.graph_labels.size(), 2u);
  }
  c.multilabel = false;
  c.label_level = LabelLevel::kEdge;
  for (const auto& lg : SynthMultidomain(c, 4)) {
    EXPECT_EQ(lg.graph.edge_labels.size(), lg.graph.edges.size());
  }
}

TEST(PartitionTest, PathOfFourSplitsInHalves) {
  TextAttributedGraph g;
  g.node_count = 4;
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  g.node_features = Tensor::Zeros({4, 1});
  g.node_labels = {0, 0, 0, 0};
  // Oracle: among all 2-partitions with part sizes 2/2, {0,1}|{2,3} is the
  // unique minimum cut.
  std::size_t best = 99, best_count = 0;
  std::vector<std::size_t> best_owner;
  for (unsigned mask = 0; mask < 16; ++mask) {
    if (__builtin_popcount(mask) != 2) continue;
    PartitionAssignment p{2, {mask & 1u, (mask >> 1) & 1u, (mask >> 2) & 1u, (mask >> 3) & 1u}};
    const std::size_t cut = CutSize(g, p);
    if (cut < best) {
      best = cut;
      best_count = 0;
    }
    if (cut == best) ++best_count;
  }
  EXPECT_EQ(best, 1u);
  EXPECT_EQ(best_count, 2u);  // the same split under both labelings
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = PartitionSubgraph(g, 2, seed);
    EXPECT_EQ(p.Members(), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}})) << seed;
    EXPECT_EQ(CutSize(g, p), 1u);
  }
}

TEST(PartitionTest, TrivialPartCounts) {
  std::mt19937_64 rng(7);
  const auto g = testing::PathGraph(5, 2, rng);
  const auto one = PartitionSubgraph(g, 1, 3);
  EXPECT_EQ(one.owner, std::vector<std::size_t>(5, 0));
  EXPECT_EQ(CutSize(g, one), 0u);
  const auto all = PartitionSubgraph(g, 5, 3);
  EXPECT_EQ(all.Sizes(), std::vector<std::size_t>(5, 1));
  EXPECT_THROW(PartitionSubgraph(g, 6, 3), ConfigError);
  EXPECT_THROW(PartitionSubgraph(g, 0, 3), ConfigError);
}

TEST(PartitionTest, GraphLevelDealsEvenly) {
  EXPECT_EQ(PartitionGraphLevel(6, 3, 1).Sizes(), (std::vector<std::size_t>{2, 2, 2}));
  auto sizes = PartitionGraphLevel(7, 3, 1).Sizes();
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2}));
  EXPECT_EQ(PartitionGraphLevel(9, 4, 5), PartitionGraphLevel(9, 4, 5));
  EXPECT_THROW(PartitionGraphLevel(0, 1, 1), ConfigError);
  EXPECT_THROW(PartitionGraphLevel(2, 3, 1), ConfigError);
}

TEST(PartitionTest, RandomGraphsKeepEveryNodeAndDropOnlyCutEdges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthConfig c = TwoDomains(3);
    c.domains.resize(1);
    c.domains[0].nodes_per_graph = 30 + seed;
    const auto g = SynthMultidomain(c, seed).front().graph;
    const std::size_t k = 2 + seed % 4;
    const auto p = PartitionSubgraph(g, k, seed);
    ASSERT_EQ(p.owner.size(), g.node_count);
    std::vector<int> hits(g.node_count, 0);
    for (const auto& members : p.Members())
      for (std::size_t v : members) ++hits[v];
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

    const std::size_t ceil = (g.node_count + k - 1) / k;
    const std::size_t cap = std::max(ceil, static_cast<std::size_t>(1.2 * ceil));
    for (std::size_t s : p.Sizes()) EXPECT_LE(s, cap);

    const auto pieces = SplitByPartition(g, p);
    std::size_t kept = 0, nodes = 0;
    for (const auto& piece : pieces) {
      kept += piece.edges.size();
      nodes += piece.node_count;
    }
    EXPECT_EQ(nodes, g.node_count);
    EXPECT_EQ(kept + CutSize(g, p), g.edges.size());
  }
}

}  // namespace
}  // namespace fedbook
