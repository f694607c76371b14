#ifndef FEDBOOK_AGGREGATION_H_
#define FEDBOOK_AGGREGATION_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedbook/params.h"
#include "fedbook/tensor.h"

namespace fedbook {

// One client's post-round state as seen by the server.
struct ClientUpload {
  std::size_t client_id = 0;
  ParamSet params;  // all parameters, codebook tokens included
  FrequencyCounters counters;
  std::size_t sample_count = 0;

  const Tensor& tokens() const { return params.at(param::kTokens); }
};

// Throws unless the uploads are non-empty and share one parameter layout and
// codebook shape.
void ValidateUploads(std::span<const ClientUpload> uploads);

// N x d_h slice of an H x N x d_h token table.
Tensor HeadTokens(const Tensor& tokens, std::size_t head);

// Cosine similarity between every token of client a (rows) and client b
// (columns) within one head. Zero tokens give 0.
Tensor TokenSimilarity(const Tensor& tokens_a, const Tensor& tokens_b, std::size_t head);

// Frequency-gated similarity. keep(i, j) holds when freq_b[j] >= freq_a[i];
// other entries hold -infinity and must be read as weight 0.
struct MaskedSimilarity {
  Tensor values;           // N x N
  std::vector<char> keep;  // row-major N x N

  bool kept(std::size_t i, std::size_t j) const { return keep[i * values.cols() + j] != 0; }
};

MaskedSimilarity AlignmentMask(const Tensor& similarity,
                               std::span<const std::uint64_t> freq_a,
                               std::span<const std::uint64_t> freq_b);

// Frequency-guided semantic alignment, applied per head:
//   phi_i^a <- lambda phi_i^a + (1 - lambda) sum_{b,j} w_{ij}^{ab} phi_j^b
// with w the softmax of the masked similarities over every client b
// (including a) and token j. Returns one updated H x N x d_h table per upload.
std::vector<Tensor> UpdateCodebooksPhase1(std::span<const ClientUpload> uploads,
                                          double lambda);

// Mean over heads of (1/N) sum_i max_j S_ij. Asymmetric in general.
double ClientSimilarity(const Tensor& tokens_a, const Tensor& tokens_b);

// K x K matrix of ClientSimilarity(tokens_a, tokens_b).
Tensor ClientSimilarityMatrix(std::span<const ClientUpload> uploads);

// Max-shifted softmax of a vector.
std::vector<double> SoftmaxWeights(std::span<const double> logits);

// sum_k weights[k] * sets[k], tensor by tensor.
ParamSet WeightedAverage(std::span<const ParamSet* const> sets,
                         std::span<const double> weights);

// For each client a, the non-codebook parameters averaged with weights
// softmax(delta[a, :]).
std::vector<ParamSet> PersonalizedOtherParams(std::span<const ClientUpload> uploads,
                                              const Tensor& delta);

// 1 - mean_b delta[a, b], self term included.
std::vector<double> DomainDistinctiveness(const Tensor& delta);

// All parameters (tokens positionally) averaged with softmax(distinctiveness).
ParamSet GlobalAggregatePhase2(std::span<const ClientUpload> uploads,
                               std::span<const double> distinctiveness);

// Sample-count-weighted average of all parameters.
ParamSet FedAvgAggregate(std::span<const ClientUpload> uploads);

struct Phase1Output {
  std::vector<ParamSet> personalized;  // full parameter sets, by upload order
  Tensor client_similarity;            // K x K
};
Phase1Output RunPhase1(std::span<const ClientUpload> uploads, double lambda);

struct Phase2Output {
  ParamSet global;
  Tensor client_similarity;
  std::vector<double> distinctiveness;
  std::vector<double> weights;
};
Phase2Output RunPhase2(std::span<const ClientUpload> uploads);

}  // namespace fedbook

#endif  // FEDBOOK_AGGREGATION_H_
