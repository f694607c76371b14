#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "fedbook/errors.h"
#include "fedbook/finetune.h"
#include "fedbook/gvq_mae.h"
#include "gtest/gtest.h"
#include "oracle/oracles.h"
#include "test_util.h"

namespace fedbook {
namespace {

using testing::RandomTensor;

ModelConfig TinyModel() {
  ModelConfig m;
  m.feature_dim = 3;
  m.hidden_dim = 4;
  m.heads = 2;
  m.tokens = 5;
  return m;
}

std::vector<double> Row(const Tensor& t, std::size_t r) {
  return {t.row(r).begin(), t.row(r).end()};
}

TEST(EmbedInstancesTest, SymmetricTwinsGetIdenticalEmbeddings) {
  TextAttributedGraph g;
  g.node_count = 3;
  g.node_features = Tensor({3, 3}, {0.5, -1, 2, 0.5, -1, 2, 3, 0, 1});
  g.edges = {{0, 1}, {0, 2}, {1, 2}};
  g.node_labels = {0, 0, 1};
  const ParamSet backbone = InitParams(TinyModel(), 3);
  const Tensor z = EmbedInstances(g, backbone, LabelLevel::kNode);
  ASSERT_EQ(z.shape(), (Shape{3, 4}));
  EXPECT_EQ(Row(z, 0), Row(z, 1));
}

TEST(EmbedInstancesTest, EdgeRowsAreElementwiseProducts) {
  std::mt19937_64 rng(4);
  TextAttributedGraph g;
  g.level = LabelLevel::kEdge;
  g.node_count = 3;
  g.node_features = RandomTensor({3, 3}, rng);
  g.edges = {{0, 1}, {2, 2}};
  g.edge_labels = {1, 0};
  const ParamSet backbone = InitParams(TinyModel(), 3);
  const Tensor zq = QuantizedNodeEmbeddings(g, backbone);
  const Tensor e = EmbedInstances(g, backbone, LabelLevel::kEdge);
  ASSERT_EQ(e.rows(), 2u);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_DOUBLE_EQ(e(0, c), zq(0, c) * zq(1, c));
    EXPECT_DOUBLE_EQ(e(1, c), zq(2, c) * zq(2, c));  // self loop squares
  }
}

TEST(EmbedInstancesTest, GraphRowIsTheNodeMean) {
  std::mt19937_64 rng(5);
  TextAttributedGraph g;
  g.level = LabelLevel::kGraph;
  g.node_count = 4;
  g.node_features = RandomTensor({4, 3}, rng);
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  g.graph_labels = {1};
  const ParamSet backbone = InitParams(TinyModel(), 8);
  const Tensor zq = QuantizedNodeEmbeddings(g, backbone);
  const Tensor e = EmbedInstances(g, backbone, LabelLevel::kGraph);
  ASSERT_EQ(e.shape(), (Shape{1, 4}));
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (std::size_t v = 0; v < 4; ++v) sum += zq(v, c);
    EXPECT_NEAR(e(0, c), sum / 4.0, 1e-15);
  }
}

TEST(EmbedInstancesTest, QuantizedRowsAreCodebookCombinations) {
  std::mt19937_64 rng(6);
  const TextAttributedGraph g = testing::PathGraph(6, 3, rng);
  const ParamSet backbone = InitParams(TinyModel(), 2);
  const Tensor a = QuantizedNodeEmbeddings(g, backbone);
  const Tensor b = QuantizedNodeEmbeddings(g, backbone);
  EXPECT_EQ(a, b);
  // Two nodes that pick the same tokens in every head share a row, so the
  // number of distinct rows is at most N^H.
  std::set<std::vector<double>> distinct;
  for (std::size_t v = 0; v < 6; ++v) distinct.insert(Row(a, v));
  EXPECT_LE(distinct.size(), 25u);
}

TEST(EmbedInstancesTest, LevelMismatchIsRejected) {
  std::mt19937_64 rng(7);
  const TextAttributedGraph g = testing::PathGraph(3, 3, rng);
  EXPECT_THROW(EmbedInstances(g, InitParams(TinyModel(), 1), LabelLevel::kGraph), ContractError);
}

TEST(CollectInstancesTest, CompactsLabelsToPresentClasses) {
  std::mt19937_64 rng(8);
  TextAttributedGraph g = testing::PathGraph(4, 3, rng);
  g.node_labels = {7, 3, 7, 3};
  const InstanceSet set = CollectInstances({g}, InitParams(TinyModel(), 1), LabelLevel::kNode);
  EXPECT_EQ(set.classes, (std::vector<std::int64_t>{3, 7}));
  EXPECT_EQ(set.labels, (std::vector<std::size_t>{1, 0, 1, 0}));
  EXPECT_EQ(set.class_count(), 2u);
  EXPECT_EQ(set.size(), 4u);
}

TEST(FitPrototypesTest, OnePrototypePerClassAtTheClassMean) {
  const Tensor emb({4, 2}, {0, 0, 2, 2, 10, 0, 12, 4});
  const std::vector<std::size_t> labels = {0, 0, 1, 1};
  const PrototypeHead head = FitPrototypes(emb, labels, 2);
  EXPECT_EQ(head.prototypes, Tensor({2, 2}, {1, 1, 11, 2}));
}

TEST(FitPrototypesTest, MatchesGroupByOracle) {
  std::mt19937_64 rng(9);
  const Tensor emb = RandomTensor({30, 3}, rng);
  std::vector<std::size_t> labels(30);
  for (std::size_t i = 0; i < 30; ++i) labels[i] = rng() % 4;
  for (std::size_t c = 0; c < 4; ++c) labels[c] = c;
  std::map<std::size_t, std::vector<double>> sums;
  std::map<std::size_t, double> counts;
  for (std::size_t i = 0; i < 30; ++i) {
    auto& s = sums[labels[i]];
    s.resize(3);
    for (std::size_t c = 0; c < 3; ++c) s[c] += emb(i, c);
    counts[labels[i]] += 1.0;
  }
  const PrototypeHead head = FitPrototypes(emb, labels, 4);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(head.prototypes(k, c), sums[k][c] / counts[k], 1e-14);
}

TEST(FitPrototypesTest, EmptyClassIsNamed) {
  const Tensor emb({2, 1}, {1, 2});
  const std::vector<std::size_t> labels = {0, 0};
  try {
    FitPrototypes(emb, labels, 2);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(PredictTest, HandComputedMixture) {
  PrototypeHead proto;
  proto.prototypes = Tensor({2, 1}, {0.0, std::sqrt(std::log(2.0))});
  LinearHead lin{Tensor({1, 2}), Tensor({2})};
  const std::vector<double> z = {0.0};
  const auto pp = PrototypeProbabilities(z, proto);
  EXPECT_NEAR(pp[0], 2.0 / 3.0, 1e-15);
  const auto p = Predict(z, proto, lin);
  EXPECT_NEAR(p[0], 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(p[1], 5.0 / 12.0, 1e-15);
}

TEST(PredictTest, MatchesOracleAndIsADistribution) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    PrototypeHead proto;
    proto.prototypes = RandomTensor({4, 3}, rng);
    LinearHead lin{RandomTensor({3, 4}, rng), RandomTensor({4}, rng)};
    const Tensor z = RandomTensor({3}, rng, -2, 2);
    const auto p = Predict(z.data(), proto, lin);
    const auto want = oracle::LoopCombinedPrediction({z.data().begin(), z.data().end()},
                                                     proto.prototypes, lin.weight, lin.bias);
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(p[c], want[c], 1e-12);
      EXPECT_GE(p[c], 0.0);
      sum += p[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(PredictTest, InvariantToSharedTranslationAndBiasShift) {
  std::mt19937_64 rng(11);
  PrototypeHead proto;
  proto.prototypes = RandomTensor({3, 2}, rng);
  LinearHead lin{RandomTensor({2, 3}, rng), RandomTensor({3}, rng)};
  const std::vector<double> z = {0.3, -0.4};
  const auto base_proto = PrototypeProbabilities(z, proto);
  const auto base_lin = LinearProbabilities(z, lin);

  PrototypeHead moved = proto;
  for (std::size_t k = 0; k < 3; ++k) {
    moved.prototypes(k, 0) += 5.0;
    moved.prototypes(k, 1) -= 2.0;
  }
  const auto shifted = PrototypeProbabilities(std::vector<double>{5.3, -2.4}, moved);
  LinearHead biased = lin;
  for (double& b : biased.bias.data()) b += 9.0;
  const auto lin_shift = LinearProbabilities(z, biased);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(shifted[c], base_proto[c], 1e-12);
    EXPECT_NEAR(lin_shift[c], base_lin[c], 1e-12);
  }
}

TEST(PredictTest, ZeroLinearHeadIsUniform) {
  LinearHead lin{Tensor({2, 5}), Tensor({5})};
  for (double p : LinearProbabilities(std::vector<double>{3.0, -1.0}, lin))
    EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(MetricsTest, AccuracyAndTies) {
  const Tensor probs({3, 2}, {0.9, 0.1, 0.2, 0.8, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(Accuracy(probs, std::vector<std::size_t>{0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(Accuracy(probs, std::vector<std::size_t>{0, 1, 1}), 2.0 / 3.0);
  EXPECT_THROW(Accuracy(Tensor({0, 2}), std::vector<std::size_t>{}), ContractError);
}

TEST(MetricsTest, AucHandCases) {
  const Tensor targets({4, 1}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(AucRoc(Tensor({4, 1}, {0.1, 0.2, 0.7, 0.9}), targets), 1.0);
  EXPECT_DOUBLE_EQ(AucRoc(Tensor({4, 1}, {0.1, 0.4, 0.35, 0.8}), targets), 0.75);
  EXPECT_DOUBLE_EQ(AucRoc(Tensor({4, 1}, {0.5, 0.5, 0.5, 0.5}), targets), 0.5);
  EXPECT_THROW(AucRoc(Tensor({2, 1}, {0.1, 0.2}), Tensor({2, 1}, {1, 1})), ContractError);
}

TEST(MetricsTest, AucMatchesPairCountingOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor scores({25, 3}), targets({25, 3});
    for (double& v : scores.data()) v = static_cast<double>(rng() % 6) / 5.0;  // many ties
    for (double& v : targets.data()) v = static_cast<double>(rng() & 1);
    for (std::size_t i = 0; i < 25; ++i) targets(i, 2) = 1.0;  // a column without negatives
    EXPECT_NEAR(AucRoc(scores, targets), oracle::PairCountingAuc(scores, targets), 1e-12);
  }
}

std::vector<std::size_t> Labels(std::initializer_list<std::size_t> counts) {
  std::vector<std::size_t> out;
  std::size_t c = 0;
  for (std::size_t n : counts) {
    out.insert(out.end(), n, c);
    ++c;
  }
  return out;
}

void ExpectPartition(const Split& s, std::size_t n) {
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> want(n);
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(all, want);
}

TEST(SplitTest, FewShotTakesExactlyKPerClass) {
  const auto labels = Labels({4, 3, 5});
  const Split s = FewShotSplit(labels, 2, 1);
  EXPECT_EQ(s.train.size(), 6u);
  std::map<std::size_t, int> per_class;
  for (auto i : s.train) ++per_class[labels[i]];
  for (const auto& [c, n] : per_class) EXPECT_EQ(n, 2);
  ExpectPartition(s, labels.size());
  const Split again = FewShotSplit(labels, 2, 1);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
}

TEST(SplitTest, FewShotHalvesTheRemainder) {
  const auto labels = Labels({2, 2, 5});
  const Split s = FewShotSplit(labels, 2, 3);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(SplitTest, FewShotRejectsSmallClass) {
  EXPECT_THROW(FewShotSplit(Labels({3, 1}), 2, 0), ContractError);
}

TEST(SplitTest, StratifiedKeepsEveryClassInTraining) {
  const auto labels = Labels({1, 10, 3});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Split s = StratifiedSplit(labels, 0.6, 0.2, seed);
    std::set<std::size_t> seen;
    for (auto i : s.train) seen.insert(labels[i]);
    EXPECT_EQ(seen.size(), 3u);
    ExpectPartition(s, labels.size());
  }
}

TEST(SplitTest, RandomSplitIsAPartition) {
  const Split s = RandomSplit(17, 0.5, 0.25, 4);
  ExpectPartition(s, 17);
  EXPECT_GE(s.train.size(), 1u);
}

// Two well-separated clusters in four dimensions.
InstanceSet Separable(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  InstanceSet set;
  set.embeddings = Tensor({40, 4});
  set.classes = {0, 1};
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t c = i % 2;
    set.labels.push_back(c);
    for (std::size_t j = 0; j < 4; ++j)
      set.embeddings(i, j) = (c == 0 ? -2.0 : 2.0) * (j % 2 == 0 ? 1.0 : -1.0) + noise(rng);
  }
  return set;
}

TEST(FinetuneTest, ZeroLearningRateKeepsTheInitialLinearHead) {
  const InstanceSet set = Separable(1);
  const Split split = StratifiedSplit(set.labels, 0.6, 0.2, 1);
  FinetuneConfig config;
  config.lr = 0.0;
  config.epochs = 1;
  const FinetuneResult one = Finetune(set, split, config);
  config.epochs = 7;
  const FinetuneResult seven = Finetune(set, split, config);
  EXPECT_EQ(one.linear.weight, seven.linear.weight);
  EXPECT_EQ(one.linear.bias, seven.linear.bias);
  EXPECT_EQ(seven.val_trace.size(), 7u);
}

TEST(FinetuneTest, SeparableToyReachesPerfectAccuracy) {
  int perfect = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const InstanceSet set = Separable(seed);
    const Split split = StratifiedSplit(set.labels, 0.6, 0.2, seed);
    FinetuneConfig config;
    config.lr = 1e-1;
    config.epochs = 30;
    config.seed = seed;
    const FinetuneResult r = Finetune(set, split, config);
    if (Score(set, split.test, r.proto, r.linear, Metric::kAccuracy) == 1.0) ++perfect;
    EXPECT_LT(r.train_trace.back(), r.train_trace.front());
  }
  EXPECT_GE(perfect, 4);
}

TEST(FinetuneTest, BackboneEmbeddingsAreUntouched) {
  std::mt19937_64 rng(13);
  std::vector<TextAttributedGraph> graphs;
  for (int i = 0; i < 3; ++i) graphs.push_back(testing::PathGraph(8, 3, rng));
  const ParamSet backbone = InitParams(TinyModel(), 21);
  const ParamSet copy = backbone;
  TaskSpec task;
  FinetuneConfig config;
  config.epochs = 5;
  const InstanceSet before = CollectInstances(graphs, backbone, LabelLevel::kNode);
  const ClientEvaluation eval = EvaluateClient(0, graphs, backbone, task, config);
  EXPECT_EQ(backbone, copy);
  EXPECT_EQ(CollectInstances(graphs, backbone, LabelLevel::kNode).embeddings, before.embeddings);
  EXPECT_GE(eval.score, 0.0);
  EXPECT_LE(eval.score, 1.0);
}

TEST(FinetuneTest, MultilabelPathScoresWithAuc) {
  std::mt19937_64 rng(14);
  InstanceSet set;
  set.multilabel = true;
  set.embeddings = RandomTensor({30, 3}, rng);
  set.multilabel_targets = Tensor({30, 2});
  for (std::size_t i = 0; i < 30; ++i) {
    set.multilabel_targets(i, 0) = set.embeddings(i, 0) > 0 ? 1.0 : 0.0;
    set.multilabel_targets(i, 1) = set.embeddings(i, 1) > 0 ? 1.0 : 0.0;
  }
  const Split split = RandomSplit(30, 0.6, 0.2, 2);
  FinetuneConfig config;
  config.lr = 1e-1;
  config.epochs = 20;
  const FinetuneResult r = Finetune(set, split, config);
  EXPECT_EQ(r.proto.negative_prototypes.rows(), 2u);
  const Tensor probs = PredictBatch(set.embeddings, r.proto, r.linear, true);
  ASSERT_EQ(probs.shape(), (Shape{30, 2}));
  for (double p : probs.data()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_GT(Score(set, split.test, r.proto, r.linear, Metric::kAucRoc), 0.5);
}

TEST(TaskSpecTest, MetricMatchesTaskKind) {
  TaskSpec task;
  EXPECT_NO_THROW(task.Validate(false));
  task.metric = Metric::kAucRoc;
  EXPECT_THROW(task.Validate(false), ConfigError);
  task.level = LabelLevel::kGraph;
  EXPECT_NO_THROW(task.Validate(true));
  task.metric = Metric::kAccuracy;
  EXPECT_THROW(task.Validate(true), ConfigError);
  EXPECT_EQ(ParseMetric(ToString(Metric::kAucRoc)), Metric::kAucRoc);
}

}  // namespace
}  // namespace fedbook
