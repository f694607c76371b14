#ifndef FEDBOOK_PARAMS_H_
#define FEDBOOK_PARAMS_H_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedbook/tensor.h"

namespace fedbook {

// Named parameter tensors of one gVQ-MAE, ordered by name.
using ParamSet = std::map<std::string, Tensor>;

namespace param {
inline constexpr const char* kEnc1Self = "encoder.l1.self";
inline constexpr const char* kEnc1Neigh = "encoder.l1.neigh";
inline constexpr const char* kEnc1Edge = "encoder.l1.edge";
inline constexpr const char* kEnc1Bias = "encoder.l1.bias";
inline constexpr const char* kEnc2Self = "encoder.l2.self";
inline constexpr const char* kEnc2Neigh = "encoder.l2.neigh";
inline constexpr const char* kEnc2Edge = "encoder.l2.edge";
inline constexpr const char* kEnc2Bias = "encoder.l2.bias";
inline constexpr const char* kTokens = "codebook.tokens";         // H x N x d_h
inline constexpr const char* kProjection = "codebook.projection"; // (H*d_h) x d_h
inline constexpr const char* kDecoder = "decoder.weight";         // d_h x d
inline constexpr const char* kMask = "mask.token";                // d
}  // namespace param

// Everything except the codebook tokens: the "other parameters" that Phase 1
// aggregates by client similarity.
ParamSet OtherParams(const ParamSet& params);

// Copies `tokens` into params[param::kTokens].
ParamSet WithTokens(ParamSet params, Tensor tokens);

// Throws DimensionError unless both sets have the same names and shapes.
void RequireSameLayout(const ParamSet& a, const ParamSet& b);

std::size_t ParameterCount(const ParamSet& params);

// Per-head, per-token access counts gathered during local training.
class FrequencyCounters {
 public:
  FrequencyCounters() = default;
  FrequencyCounters(std::size_t heads, std::size_t tokens)
      : heads_(heads), tokens_(tokens), counts_(heads * tokens, 0) {}

  std::size_t heads() const { return heads_; }
  std::size_t tokens() const { return tokens_; }
  std::uint64_t at(std::size_t h, std::size_t j) const { return counts_[h * tokens_ + j]; }
  std::uint64_t& at(std::size_t h, std::size_t j) { return counts_[h * tokens_ + j]; }
  std::uint64_t HeadTotal(std::size_t h) const;
  const std::vector<std::uint64_t>& raw() const { return counts_; }

  void Reset() { std::fill(counts_.begin(), counts_.end(), 0); }
  void Add(const FrequencyCounters& other);

  friend bool operator==(const FrequencyCounters&, const FrequencyCounters&) = default;

 private:
  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  std::vector<std::uint64_t> counts_;
};

}  // namespace fedbook

#endif  // FEDBOOK_PARAMS_H_
