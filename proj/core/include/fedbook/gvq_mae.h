#ifndef FEDBOOK_GVQ_MAE_H_
#define FEDBOOK_GVQ_MAE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedbook/autodiff.h"
#include "fedbook/graph.h"
#include "fedbook/optimizer.h"
#include "fedbook/params.h"
#include "fedbook/tensor.h"

namespace fedbook {

struct ModelConfig {
  std::size_t feature_dim = 16;       // d
  std::size_t edge_feature_dim = 0;   // d_e, 0 when graphs carry no edge features
  std::size_t hidden_dim = 16;        // d_h
  std::size_t heads = 2;              // H
  std::size_t tokens = 16;            // N per head
  double mask_ratio = 0.25;           // rho
  double gamma = 2.0;                 // feature-loss exponent

  void Validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Seeded initialization: weights ~ N(0, 0.02^2), biases zero, codebook
// tokens drawn from N(0, 1) and normalized to unit rows.
ParamSet InitParams(const ModelConfig& config, std::uint64_t seed);

// Throws DimensionError when `params` does not have the layout `config`
// implies.
void CheckLayout(const ParamSet& params, const ModelConfig& config);

// Graph-derived constants reused across epochs.
struct PreparedGraph {
  const TextAttributedGraph* graph = nullptr;
  Tensor adjacency;        // n x n
  Tensor neighbor_mean;    // n x n, row-normalized
  Tensor edge_mean;        // n x d_e, empty without edge features

  explicit PreparedGraph(const TextAttributedGraph& g);
};

// Parameters registered on a tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamSet& params);
  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) > 0; }
  ParamSet Gradients() const;
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

// Rows replaced by the mask token: floor(ratio * n) rows from a seeded
// shuffle, ascending.
std::vector<std::size_t> ChooseMaskedRows(std::size_t n, double ratio,
                                          std::uint64_t seed);

// Two-layer mean-aggregation encoder:
//   h' = act(h W_self + mean_{u in N(v)} (h_u W_neigh + x_uv W_edge) + b)
// with ReLU after layer 1 and identity after layer 2. Isolated nodes get a
// zero neighbor term. `masked_rows` are replaced by the mask token first.
Var Encode(const PreparedGraph& g, const BoundParams& params,
           std::span<const std::size_t> masked_rows);

// Index of the nearest token (squared Euclidean) for every row of `z` in one
// head of an H x N x d_h token table; ties go to the lowest index.
std::vector<std::size_t> NearestTokens(const Tensor& z, const Tensor& tokens,
                                       std::size_t head);

struct Quantized {
  std::vector<std::vector<std::size_t>> indices;  // per head, one per row
  Var zq;                                         // n x d_h
};

// Per-head nearest-token lookup, concatenation, and the shared projection.
// Counts one access per row and head into `counters` when given.
Quantized Quantize(Var z, const BoundParams& params, FrequencyCounters* counters);

// mean_i (1 - cos(x_i, xhat_i))^gamma
Var FeatureLoss(Var x, Var x_hat, double gamma);
// || A - sigmoid(xhat xhat^T) ||_F^2, diagonal included.
Var TopologyLoss(Var adjacency, Var x_hat);

struct LossTerms {
  Var total;
  Var feature;
  Var topology;
  Var codebook;    // mean ||sg[z] - zq||^2, trains tokens and projection
  Var commitment;  // mean ||z - sg[zq]||^2, trains the encoder
};

// Pre-training objective over a client's graphs. Feature, codebook and
// commitment terms are pooled over all nodes; topology terms add up per
// graph. `mask_seed` fixes the masked rows (one derived seed per graph).
LossTerms PretrainLoss(const std::vector<PreparedGraph>& graphs,
                       const BoundParams& params, const ModelConfig& config,
                       std::uint64_t mask_seed, FrequencyCounters* counters);

// Scalar value of PretrainLoss on raw parameters.
double EvaluatePretrainLoss(const std::vector<PreparedGraph>& graphs,
                            const ParamSet& params, const ModelConfig& config,
                            std::uint64_t mask_seed);

struct TrainConfig {
  std::size_t epochs = 2;
  OptimizerConfig optimizer;
  // Graphs per optimization step; 0 means full batch.
  std::size_t batch_size = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LocalTrainResult {
  ParamSet params;
  std::vector<double> loss_trace;  // one entry per epoch
  std::size_t sample_count = 0;    // M: nodes, edges, or graphs
  FrequencyCounters counters;      // accumulated over every epoch
};

LocalTrainResult LocalTrain(const std::vector<TextAttributedGraph>& data,
                            ParamSet params, const ModelConfig& config,
                            const TrainConfig& train, std::mt19937_64& rng);

}  // namespace fedbook

#endif  // FEDBOOK_GVQ_MAE_H_
