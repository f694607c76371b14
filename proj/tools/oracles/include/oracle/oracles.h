#ifndef ORACLE_ORACLES_H_
#define ORACLE_ORACLES_H_

// Slow, loop-only reference implementations used to cross-check the library.
// Nothing here calls into the library beyond the Tensor container.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedbook/tensor.h"

namespace oracle {

using fedbook::Tensor;
using Flat = std::vector<double>;
using Counts = std::vector<std::uint64_t>;

Tensor TripleLoopMatMul(const Tensor& a, const Tensor& b);

// For every row of z, the index of the nearest token of `head` in an
// H x N x d table by a full scan; the first minimum wins.
std::vector<std::size_t> BruteForceNearest(const Tensor& z, const Tensor& tokens,
                                           std::size_t head);

double LoopCosine(const double* a, const double* b, std::size_t n);

// S[i][j] for one head, loop by loop.
std::vector<Flat> LoopTokenSimilarity(const Tensor& ta, const Tensor& tb, std::size_t head);

// keep[i][j] = freq_b[j] >= freq_a[i].
std::vector<std::vector<bool>> LoopMask(const Counts& freq_a, const Counts& freq_b);

// Codebook update with every (b, j) weight written out explicitly.
// `freqs[k]` is client k's H x N count table, row-major.
std::vector<Tensor> MaterializedCodebookUpdate(const std::vector<Tensor>& tokens,
                                               const std::vector<Counts>& freqs, double lambda);

double LoopClientSimilarity(const Tensor& ta, const Tensor& tb);

Flat LoopSoftmax(const Flat& logits);

// out[a] = sum_b softmax(delta[a])_b * params[b]
std::vector<Flat> LoopPersonalized(const std::vector<Flat>& params,
                                   const std::vector<Flat>& delta);

Flat LoopDistinctiveness(const std::vector<Flat>& delta);

Flat LoopWeightedMean(const std::vector<Flat>& params, const Flat& weights);

// sum_a softmax(nabla)_a * params[a]
Flat LoopGlobal(const std::vector<Flat>& params, const Flat& nabla);

Flat LoopFedAvg(const std::vector<Flat>& params, const std::vector<std::size_t>& counts);

// mean_i (1 - cos(x_i, xhat_i))^gamma
double LoopFeatureLoss(const Tensor& x, const Tensor& x_hat, double gamma);

// sum_ij (A_ij - sigmoid(<xhat_i, xhat_j>))^2
double LoopTopologyLoss(const Tensor& adjacency, const Tensor& x_hat);

// (1/n) sum_i ||z_i - zq_i||^2
double LoopQuantizationGap(const Tensor& z, const Tensor& zq);

// Loop-level model for a single graph, used to cross-check the encoder and
// the pre-training loss. Empty edge tensors disable the edge terms.
struct LoopGraph {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  Tensor x;       // n x d
  Tensor edge_x;  // E x d_e or empty
};

struct LoopModel {
  Tensor w1_self, w1_neigh, w1_edge, b1;
  Tensor w2_self, w2_neigh, w2_edge, b2;
  Tensor tokens;      // H x N x d_h
  Tensor projection;  // (H d_h) x d_h
  Tensor decoder;     // d_h x d
  Tensor mask;        // d
};

// h' = act(h Ws + mean over undirected incidences (h_u Wn + e_uv We) + b),
// ReLU after layer 1. Rows in `masked` start as the mask vector.
Tensor LoopEncode(const LoopGraph& g, const LoopModel& m, const std::vector<std::size_t>& masked);

// Values that stop-gradient and the nearest-token lookup hold fixed. A
// surrogate loss evaluated with these frozen has the straight-through
// gradient as its true derivative.
struct FrozenQuantization {
  std::vector<std::vector<std::size_t>> indices;  // per head
  Tensor z;   // sg[z]
  Tensor zq;  // sg[zq]
};

struct LoopLoss {
  double total = 0.0;
  double feature = 0.0;
  double topology = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  FrozenQuantization frozen;  // the point this loss was evaluated at
};

// Pre-training loss of one graph. With `frozen` null, indices come from a
// brute-force scan and the result is the plain forward value. Otherwise the
// surrogate: decoder input z + (frozen.zq - frozen.z), codebook term
// ||frozen.z - zq||^2, commitment ||z - frozen.zq||^2, frozen indices.
LoopLoss LoopPretrainLoss(const LoopGraph& g, const LoopModel& m,
                          const std::vector<std::size_t>& masked, double gamma,
                          const FrozenQuantization* frozen);

// Mean of softmax(-||z - p_c||^2) and softmax(z W + b), renormalized.
Flat LoopCombinedPrediction(const Flat& z, const Tensor& prototypes, const Tensor& weight,
                            const Tensor& bias);

// Fraction of rows whose first maximal column equals the label.
double CountingAccuracy(const Tensor& probs, const std::vector<std::size_t>& labels);

// Per column: (#(pos > neg) + 0.5 #(pos == neg)) / (#pos #neg) over every
// positive/negative pair; mean over columns holding both classes. Returns a
// negative value when no column qualifies.
double PairCountingAuc(const Tensor& scores, const Tensor& targets);

// Central differences of f at x, one coordinate at a time.
Flat CentralDifferences(const std::function<double(const Flat&)>& f, const Flat& x, double eps);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
double MaxRelativeError(const Flat& analytic, const Flat& numeric, double floor);

inline constexpr double kRelativeErrorFloor = 1e-6;

}  // namespace oracle

#endif  // ORACLE_ORACLES_H_
