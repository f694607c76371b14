#include "fedbook/aggregation.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedbook/errors.h"

namespace fedbook {

void ValidateUploads(std::span<const ClientUpload> uploads) {
  if (uploads.empty()) throw ContractError("aggregation over zero uploads");
  const ClientUpload& first = uploads.front();
  const Tensor& tokens = first.tokens();
  if (tokens.rank() != 3) throw DimensionError("codebook tokens must be H x N x d_h");
  for (const ClientUpload& u : uploads) {
    RequireSameLayout(first.params, u.params);
    if (u.counters.heads() != tokens.shape()[0] || u.counters.tokens() != tokens.shape()[1]) {
      throw DimensionError("client " + std::to_string(u.client_id) +
                           " frequency counters do not match its codebook");
    }
  }
}

Tensor HeadTokens(const Tensor& tokens, std::size_t head) {
  const std::size_t n = tokens.shape()[1], d = tokens.shape()[2];
  Tensor out({n, d});
  const auto src = tokens.data().subspan(head * n * d, n * d);
  std::copy(src.begin(), src.end(), out.data().begin());
  return out;
}

Tensor TokenSimilarity(const Tensor& tokens_a, const Tensor& tokens_b, std::size_t head) {
  if (tokens_a.shape() != tokens_b.shape()) {
    throw DimensionError("token tables differ: " + ShapeToString(tokens_a.shape()) + " vs " +
                         ShapeToString(tokens_b.shape()));
  }
  const Tensor a = HeadTokens(tokens_a, head);
  const Tensor b = HeadTokens(tokens_b, head);
  const std::size_t n = a.rows();
  Tensor s({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = Cosine(a.row(i), b.row(j));
  return s;
}

MaskedSimilarity AlignmentMask(const Tensor& similarity, std::span<const std::uint64_t> freq_a,
                               std::span<const std::uint64_t> freq_b) {
  const std::size_t n = similarity.rows();
  if (freq_a.size() != n || freq_b.size() != n || similarity.cols() != n) {
    throw DimensionError("alignment mask: frequency vectors must match the N x N similarity");
  }
  MaskedSimilarity m{similarity, std::vector<char>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (freq_b[j] >= freq_a[i]) {
        m.keep[i * n + j] = 1;
      } else {
        m.values(i, j) = -std::numeric_limits<double>::infinity();
      }
    }
  }
  return m;
}

namespace {

std::span<const std::uint64_t> HeadCounts(const FrequencyCounters& c, std::size_t head) {
  return std::span<const std::uint64_t>(c.raw()).subspan(head * c.tokens(), c.tokens());
}

}  // namespace

std::vector<Tensor> UpdateCodebooksPhase1(std::span<const ClientUpload> uploads, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  ValidateUploads(uploads);
  const std::size_t k = uploads.size();
  const Shape& shape = uploads.front().tokens().shape();
  const std::size_t heads = shape[0], n = shape[1], d = shape[2];

  std::vector<Tensor> updated;
  updated.reserve(k);
  for (const auto& u : uploads) updated.push_back(u.tokens());

  std::vector<double> mixed(d);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<Tensor> head_tokens;
    for (const auto& u : uploads) head_tokens.push_back(HeadTokens(u.tokens(), h));
    for (std::size_t a = 0; a < k; ++a) {
      std::vector<MaskedSimilarity> masked;
      for (std::size_t b = 0; b < k; ++b) {
        masked.push_back(AlignmentMask(TokenSimilarity(uploads[a].tokens(), uploads[b].tokens(), h),
                                       HeadCounts(uploads[a].counters, h),
                                       HeadCounts(uploads[b].counters, h)));
      }
      for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        std::fill(mixed.begin(), mixed.end(), 0.0);
        for (std::size_t b = 0; b < k; ++b) {
          for (std::size_t j = 0; j < n; ++j) {
            if (!masked[b].kept(i, j)) continue;
            const double w = std::exp(masked[b].values(i, j));
            denom += w;
            const auto phi = head_tokens[b].row(j);
            for (std::size_t c = 0; c < d; ++c) mixed[c] += w * phi[c];
          }
        }
        // denom > 0: the self pair (b = a, j = i) always survives the mask.
        auto out = updated[a].data().subspan((h * n + i) * d, d);
        const auto own = head_tokens[a].row(i);
        for (std::size_t c = 0; c < d; ++c)
          out[c] = lambda * own[c] + (1.0 - lambda) * (mixed[c] / denom);
      }
    }
  }
  return updated;
}

double ClientSimilarity(const Tensor& tokens_a, const Tensor& tokens_b) {
  const std::size_t heads = tokens_a.shape()[0];
  double total = 0.0;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor s = TokenSimilarity(tokens_a, tokens_b, h);
    double head_sum = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const auto row = s.row(i);
      head_sum += *std::max_element(row.begin(), row.end());
    }
    total += head_sum / static_cast<double>(s.rows());
  }
  return total / static_cast<double>(heads);
}

Tensor ClientSimilarityMatrix(std::span<const ClientUpload> uploads) {
  ValidateUploads(uploads);
  const std::size_t k = uploads.size();
  Tensor delta({k, k});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      delta(a, b) = ClientSimilarity(uploads[a].tokens(), uploads[b].tokens());
  return delta;
}

std::vector<double> SoftmaxWeights(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(logits[i] - mx);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

ParamSet WeightedAverage(std::span<const ParamSet* const> sets, std::span<const double> weights) {
  if (sets.empty() || sets.size() != weights.size()) {
    throw ContractError("weighted average needs one weight per parameter set");
  }
  ParamSet out;
  for (const auto& [name, t] : *sets.front()) out.emplace(name, Tensor::Zeros(t.shape()));
  for (std::size_t k = 0; k < sets.size(); ++k) {
    RequireSameLayout(*sets.front(), *sets[k]);
    for (auto& [name, acc] : out) {
      const Tensor& src = sets[k]->at(name);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[k] * src[i];
    }
  }
  return out;
}

std::vector<ParamSet> PersonalizedOtherParams(std::span<const ClientUpload> uploads,
                                              const Tensor& delta) {
  ValidateUploads(uploads);
  const std::size_t k = uploads.size();
  if (delta.rank() != 2 || delta.rows() != k || delta.cols() != k) {
    throw DimensionError("client similarity must be K x K");
  }
  std::vector<ParamSet> others;
  others.reserve(k);
  for (const auto& u : uploads) others.push_back(OtherParams(u.params));
  std::vector<const ParamSet*> ptrs;
  for (const auto& o : others) ptrs.push_back(&o);

  std::vector<ParamSet> out;
  out.reserve(k);
  for (std::size_t a = 0; a < k; ++a) {
    const auto w = SoftmaxWeights(delta.row(a));
    out.push_back(WeightedAverage(ptrs, w));
  }
  return out;
}

std::vector<double> DomainDistinctiveness(const Tensor& delta) {
  if (delta.rank() != 2 || delta.rows() != delta.cols()) {
    throw DimensionError("client similarity must be square");
  }
  const std::size_t k = delta.rows();
  std::vector<double> out(k);
  for (std::size_t a = 0; a < k; ++a) {
    double s = 0.0;
    for (double v : delta.row(a)) s += v;
    out[a] = 1.0 - s / static_cast<double>(k);
  }
  return out;
}

ParamSet GlobalAggregatePhase2(std::span<const ClientUpload> uploads,
                               std::span<const double> distinctiveness) {
  ValidateUploads(uploads);
  if (distinctiveness.size() != uploads.size()) {
    throw DimensionError("one distinctiveness value per client required");
  }
  std::vector<const ParamSet*> ptrs;
  for (const auto& u : uploads) ptrs.push_back(&u.params);
  return WeightedAverage(ptrs, SoftmaxWeights(distinctiveness));
}

ParamSet FedAvgAggregate(std::span<const ClientUpload> uploads) {
  ValidateUploads(uploads);
  double total = 0.0;
  for (const auto& u : uploads) total += static_cast<double>(u.sample_count);
  if (total <= 0.0) throw ContractError("fedavg needs a positive total sample count");
  std::vector<const ParamSet*> ptrs;
  std::vector<double> w;
  for (const auto& u : uploads) {
    ptrs.push_back(&u.params);
    w.push_back(static_cast<double>(u.sample_count) / total);
  }
  return WeightedAverage(ptrs, w);
}

Phase1Output RunPhase1(std::span<const ClientUpload> uploads, double lambda) {
  Phase1Output out;
  auto tokens = UpdateCodebooksPhase1(uploads, lambda);
  out.client_similarity = ClientSimilarityMatrix(uploads);
  auto others = PersonalizedOtherParams(uploads, out.client_similarity);
  for (std::size_t a = 0; a < uploads.size(); ++a)
    out.personalized.push_back(WithTokens(std::move(others[a]), std::move(tokens[a])));
  return out;
}

Phase2Output RunPhase2(std::span<const ClientUpload> uploads) {
  Phase2Output out;
  out.client_similarity = ClientSimilarityMatrix(uploads);
  out.distinctiveness = DomainDistinctiveness(out.client_similarity);
  out.weights = SoftmaxWeights(out.distinctiveness);
  out.global = GlobalAggregatePhase2(uploads, out.distinctiveness);
  return out;
}

}  // namespace fedbook
