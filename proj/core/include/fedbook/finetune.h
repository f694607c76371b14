#ifndef FEDBOOK_FINETUNE_H_
#define FEDBOOK_FINETUNE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedbook/graph.h"
#include "fedbook/optimizer.h"
#include "fedbook/params.h"
#include "fedbook/tensor.h"

namespace fedbook {

enum class Metric { kAccuracy, kAucRoc };

std::string ToString(Metric metric);
Metric ParseMetric(const std::string& text);

struct TaskSpec {
  LabelLevel level = LabelLevel::kNode;
  Metric metric = Metric::kAccuracy;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::size_t few_shot_k = 0;  // > 0 switches to a k-shot split

  // AUC-ROC is reserved for multi-label graph tasks, accuracy for the rest.
  void Validate(bool multilabel) const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Quantized node embeddings z_q of a frozen backbone, masking disabled.
Tensor QuantizedNodeEmbeddings(const TextAttributedGraph& g, const ParamSet& backbone);

// Node level: z_q per node. Edge level: z_q(src) * z_q(dst) per edge. Graph
// level: a single row, the mean of the node z_q.
Tensor EmbedInstances(const TextAttributedGraph& g, const ParamSet& backbone, LabelLevel level);

// Embeddings and labels of every instance across a client's graphs. Single
// labels are compacted to the classes present (`classes` holds the original
// ids); multi-label targets are an m x L 0/1 matrix.
struct InstanceSet {
  Tensor embeddings;
  std::vector<std::size_t> labels;
  std::vector<std::int64_t> classes;
  Tensor multilabel_targets;
  bool multilabel = false;

  std::size_t size() const { return embeddings.rows(); }
  std::size_t class_count() const {
    return multilabel ? multilabel_targets.cols() : classes.size();
  }
};

InstanceSet CollectInstances(const std::vector<TextAttributedGraph>& graphs,
                             const ParamSet& backbone, LabelLevel level);

// Class prototypes (single-label: one per class; multi-label: a positive and
// a negative prototype per label).
struct PrototypeHead {
  Tensor prototypes;           // C x d_h, or L x d_h positives
  Tensor negative_prototypes;  // L x d_h, multi-label only
  std::vector<double> fallback;  // per label, used when one side is empty
};

struct LinearHead {
  Tensor weight;  // d_h x C
  Tensor bias;    // C
};

// Mean embedding per class. Throws ContractError naming any empty class.
PrototypeHead FitPrototypes(const Tensor& embeddings, std::span<const std::size_t> labels,
                            std::size_t class_count);
PrototypeHead FitMultilabelPrototypes(const Tensor& embeddings, const Tensor& targets);

// softmax_c(-||z - p_c||^2)
std::vector<double> PrototypeProbabilities(std::span<const double> z, const PrototypeHead& proto);
// softmax_c(z W + b)
std::vector<double> LinearProbabilities(std::span<const double> z, const LinearHead& lin);
// Renormalized mean of the prototype and linear distributions.
std::vector<double> Predict(std::span<const double> z, const PrototypeHead& proto,
                            const LinearHead& lin);

// Row-wise predictions for a batch. Multi-label heads give per-label
// probabilities of the positive class.
Tensor PredictBatch(const Tensor& embeddings, const PrototypeHead& proto, const LinearHead& lin,
                    bool multilabel);

// Fraction of rows whose argmax (ties to the lowest index) equals the label.
double Accuracy(const Tensor& probs, std::span<const std::size_t> labels);

// Mann-Whitney AUC per label column, averaged over columns that contain both
// classes. Tied scores count one half.
double AucRoc(const Tensor& scores, const Tensor& targets);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Exactly k random instances per class for training; the rest is shuffled
// and halved into validation (floor) and test.
Split FewShotSplit(std::span<const std::size_t> labels, std::size_t k, std::uint64_t seed);

// Per-class fractions with at least one training instance per class.
Split StratifiedSplit(std::span<const std::size_t> labels, double train_fraction,
                      double val_fraction, std::uint64_t seed);

// Unstratified fractions, used for multi-label sets.
Split RandomSplit(std::size_t count, double train_fraction, double val_fraction,
                  std::uint64_t seed);

Split MakeSplit(const InstanceSet& set, const TaskSpec& task, std::uint64_t seed);

struct FinetuneConfig {
  std::size_t epochs = 50;
  double lr = 1e-2;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  // When set, EvaluateClient picks the lr with the best final validation
  // score from lr_grid instead of using `lr`.
  bool grid_search = false;
  std::vector<double> lr_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct FinetuneResult {
  PrototypeHead proto;
  LinearHead linear;
  std::vector<double> val_trace;    // validation score after every epoch
  std::vector<double> train_trace;  // training loss per epoch
};

// Fits prototypes at the start of every epoch and trains the linear head by
// cross-entropy on the combined prediction. The embeddings are fixed inputs,
// so the backbone that produced them cannot change.
FinetuneResult Finetune(const InstanceSet& set, const Split& split, const FinetuneConfig& config);

double Score(const InstanceSet& set, std::span<const std::size_t> rows, const PrototypeHead& proto,
             const LinearHead& lin, Metric metric);

// Split, fine-tune and score one client's test split.
struct ClientEvaluation {
  std::size_t client_id = 0;
  double score = 0.0;
  FinetuneResult heads;
};

ClientEvaluation EvaluateClient(std::size_t client_id, const std::vector<TextAttributedGraph>& data,
                                const ParamSet& backbone, const TaskSpec& task,
                                const FinetuneConfig& config);

}  // namespace fedbook

#endif  // FEDBOOK_FINETUNE_H_
