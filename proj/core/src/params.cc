#include "fedbook/params.h"

#include "fedbook/errors.h"

namespace fedbook {

ParamSet OtherParams(const ParamSet& params) {
  ParamSet out = params;
  out.erase(param::kTokens);
  return out;
}

ParamSet WithTokens(ParamSet params, Tensor tokens) {
  params[param::kTokens] = std::move(tokens);
  return params;
}

void RequireSameLayout(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) {
    throw DimensionError("parameter sets differ in size: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw DimensionError("parameter name mismatch: " + ia->first + " vs " + ib->first);
    }
    if (ia->second.shape() != ib->second.shape()) {
      throw DimensionError("parameter " + ia->first + " shape " +
                           ShapeToString(ia->second.shape()) + " vs " +
                           ShapeToString(ib->second.shape()));
    }
  }
}

std::size_t ParameterCount(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

std::uint64_t FrequencyCounters::HeadTotal(std::size_t h) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < tokens_; ++j) s += at(h, j);
  return s;
}

void FrequencyCounters::Add(const FrequencyCounters& other) {
  if (other.heads_ != heads_ || other.tokens_ != tokens_) {
    throw DimensionError("frequency counter shapes differ");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

}  // namespace fedbook
