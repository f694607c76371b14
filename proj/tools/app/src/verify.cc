#include "app/verify.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fedbook/autodiff.h"
#include "fedbook/text_format.h"
#include "oracle/oracles.h"

namespace app {

using fedbook::ClientUpload;
using fedbook::FrequencyCounters;
using fedbook::ParamSet;
using fedbook::Tensor;
namespace param = fedbook::param;

VerifyHooks VerifyHooks::Library() {
  VerifyHooks h;
  h.nearest_tokens = fedbook::NearestTokens;
  h.pretrain_loss = [](const fedbook::TextAttributedGraph& g, const ParamSet& params,
                       const fedbook::ModelConfig& config, std::uint64_t mask_seed) {
    std::vector<fedbook::PreparedGraph> prepared;
    prepared.emplace_back(g);
    fedbook::Tape tape;
    fedbook::BoundParams bound(tape, params);
    const auto terms = fedbook::PretrainLoss(prepared, bound, config, mask_seed, nullptr);
    tape.Backward(terms.total);
    return LossWithGradients{terms.total.value().item(), bound.Gradients()};
  };
  h.feature_loss = [](const Tensor& x, const Tensor& x_hat, double gamma) {
    fedbook::Tape tape;
    return fedbook::FeatureLoss(tape.Constant(x), tape.Constant(x_hat), gamma).value().item();
  };
  h.topology_loss = [](const Tensor& a, const Tensor& x_hat) {
    fedbook::Tape tape;
    return fedbook::TopologyLoss(tape.Constant(a), tape.Constant(x_hat)).value().item();
  };
  h.predict = fedbook::Predict;
  h.token_similarity = fedbook::TokenSimilarity;
  h.alignment_mask = fedbook::AlignmentMask;
  h.codebook_update = fedbook::UpdateCodebooksPhase1;
  h.client_similarity = fedbook::ClientSimilarity;
  h.personalized = fedbook::PersonalizedOtherParams;
  h.distinctiveness = fedbook::DomainDistinctiveness;
  h.global_aggregate = fedbook::GlobalAggregatePhase2;
  return h;
}

namespace {

std::size_t Uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double UniformReal(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor Gaussian(fedbook::Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Entries with magnitude in [0.1, 2] and random sign.
Tensor Magnitudes(fedbook::Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = UniformReal(rng, 0.1, 2.0) * (rng() & 1 ? 1.0 : -1.0);
  return t;
}

double RelDiff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double MaxDiff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<double> Values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

CheckResult Finish(std::string name, double err, double tol, std::string detail) {
  return CheckResult{std::move(name), err <= tol, err, tol, std::move(detail)};
}

Tensor RandomDelta(std::size_t k, std::mt19937_64& rng) {
  Tensor d({k, k});
  for (double& v : d.data()) v = UniformReal(rng, -1.0, 1.0);
  return d;
}

}  // namespace

std::vector<double> Flatten(const ParamSet& params) {
  std::vector<double> out;
  for (const auto& [_, t] : params) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

namespace {

ParamSet Unflatten(const ParamSet& layout, const std::vector<double>& flat) {
  ParamSet out = layout;
  std::size_t i = 0;
  for (auto& [_, t] : out)
    for (double& v : t.data()) v = flat[i++];
  return out;
}

}  // namespace

UploadShape RandomUploadShape(std::mt19937_64& rng, std::size_t max_clients,
                              std::size_t max_heads, std::size_t max_tokens, std::size_t max_dim) {
  return UploadShape{Uniform(rng, 1, max_clients), Uniform(rng, 1, max_heads),
                     Uniform(rng, 1, max_tokens), Uniform(rng, 1, max_dim)};
}

std::vector<ClientUpload> RandomUploads(const UploadShape& shape, std::mt19937_64& rng) {
  std::vector<ClientUpload> out;
  for (std::size_t k = 0; k < shape.clients; ++k) {
    ClientUpload u;
    u.client_id = k;
    Tensor tokens = Gaussian({shape.heads, shape.tokens, shape.dim}, rng);
    // Occasional zero token exercises the zero-cosine convention.
    if (Uniform(rng, 0, 9) == 0) {
      const std::size_t row = Uniform(rng, 0, shape.heads * shape.tokens - 1);
      for (std::size_t c = 0; c < shape.dim; ++c) tokens[row * shape.dim + c] = 0.0;
    }
    u.params[param::kTokens] = std::move(tokens);
    u.params[param::kProjection] = Gaussian({shape.heads * shape.dim, shape.dim}, rng);
    u.params[param::kDecoder] = Gaussian({shape.dim, 3}, rng);
    u.params[param::kEnc1Bias] = Gaussian({shape.dim}, rng);
    u.counters = FrequencyCounters(shape.heads, shape.tokens);
    for (std::size_t h = 0; h < shape.heads; ++h)
      for (std::size_t j = 0; j < shape.tokens; ++j) u.counters.at(h, j) = Uniform(rng, 0, 4);
    u.sample_count = Uniform(rng, 1, 50);
    out.push_back(std::move(u));
  }
  return out;
}

CheckResult CheckQuantization(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x51);
  std::size_t mismatches = 0, tied_rows = 0, rows = 0;
  for (std::size_t trial = 0; trial < opt.quantization_pairs; ++trial) {
    const std::size_t n = Uniform(rng, 1, 20), n_tok = Uniform(rng, 1, 16),
                      heads = Uniform(rng, 1, 3), d = Uniform(rng, 1, 6);
    const bool lattice = trial % 2 == 0;  // small integer grid, ties are common
    auto draw = [&](fedbook::Shape s) {
      if (!lattice) return Gaussian(std::move(s), rng);
      Tensor t(std::move(s));
      for (double& v : t.data()) v = static_cast<double>(Uniform(rng, 0, 2)) - 1.0;
      return t;
    };
    Tensor tokens = draw({heads, n_tok, d});
    Tensor z = draw({n, d});
    // Copy some tokens onto rows so exact hits occur.
    for (std::size_t r = 0; r < n; ++r) {
      if (Uniform(rng, 0, 3) != 0) continue;
      const std::size_t h = Uniform(rng, 0, heads - 1), j = Uniform(rng, 0, n_tok - 1);
      for (std::size_t c = 0; c < d; ++c) z(r, c) = tokens[(h * n_tok + j) * d + c];
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const auto got = hooks.nearest_tokens(z, tokens, h);
      const auto want = oracle::BruteForceNearest(z, tokens, h);
      for (std::size_t r = 0; r < n; ++r) {
        ++rows;
        if (got.size() != n || got[r] != want[r]) ++mismatches;
        std::size_t minima = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_tok; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = z(r, c) - tokens[(h * n_tok + j) * d + c];
            s += diff * diff;
          }
          if (s < best) {
            best = s;
            minima = 1;
          } else if (s == best) {
            ++minima;
          }
        }
        if (minima > 1) ++tied_rows;
      }
    }
  }
  std::ostringstream detail;
  detail << "pairs=" << opt.quantization_pairs << " rows=" << rows << " tied_rows=" << tied_rows
         << " mismatches=" << mismatches;
  return Finish("nearest-token quantization", static_cast<double>(mismatches), 0.0,
                detail.str());
}

namespace {

oracle::LoopModel ToLoopModel(const ParamSet& p) {
  auto get = [&](const char* name) {
    auto it = p.find(name);
    return it == p.end() ? Tensor() : it->second;
  };
  oracle::LoopModel m;
  m.w1_self = get(param::kEnc1Self);
  m.w1_neigh = get(param::kEnc1Neigh);
  m.w1_edge = get(param::kEnc1Edge);
  m.b1 = get(param::kEnc1Bias);
  m.w2_self = get(param::kEnc2Self);
  m.w2_neigh = get(param::kEnc2Neigh);
  m.w2_edge = get(param::kEnc2Edge);
  m.b2 = get(param::kEnc2Bias);
  m.tokens = get(param::kTokens);
  m.projection = get(param::kProjection);
  m.decoder = get(param::kDecoder);
  m.mask = get(param::kMask);
  return m;
}

oracle::LoopGraph ToLoopGraph(const fedbook::TextAttributedGraph& g) {
  oracle::LoopGraph lg;
  lg.node_count = g.node_count;
  for (const auto& e : g.edges) lg.edges.push_back({e.src, e.dst});
  lg.x = g.node_features;
  if (g.edge_features) lg.edge_x = *g.edge_features;
  return lg;
}

}  // namespace

CheckResult CheckPretrainGradients(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x52);
  fedbook::ModelConfig config;
  config.feature_dim = 4;
  config.edge_feature_dim = 4;
  config.hidden_dim = 6;
  config.heads = 2;
  config.tokens = 4;
  config.mask_ratio = 0.25;
  config.gamma = 2.0;

  fedbook::TextAttributedGraph g;
  g.node_count = 5;
  g.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}, {4, 4}};
  g.node_features = Magnitudes({5, 4}, rng);
  g.edge_features = Magnitudes({g.edges.size(), 4}, rng);
  g.level = fedbook::LabelLevel::kNode;
  g.node_labels = {0, 1, 0, 1, 0};

  ParamSet params = fedbook::InitParams(config, rng());
  for (auto& [name, t] : params) t = Magnitudes(t.shape(), rng);
  const std::uint64_t mask_seed = rng();

  const LossWithGradients analytic = hooks.pretrain_loss(g, params, config, mask_seed);
  const auto masked = fedbook::ChooseMaskedRows(g.node_count, config.mask_ratio,
                                                std::mt19937_64(mask_seed)());
  const auto lg = ToLoopGraph(g);
  const auto base = oracle::LoopPretrainLoss(lg, ToLoopModel(params), masked, config.gamma, nullptr);
  const double forward_err = RelDiff(analytic.total, base.total);

  auto surrogate = [&](const std::vector<double>& flat) {
    return oracle::LoopPretrainLoss(lg, ToLoopModel(Unflatten(params, flat)), masked, config.gamma,
                                    &base.frozen)
        .total;
  };
  const auto numeric = oracle::CentralDifferences(surrogate, Flatten(params), 1e-5);
  const std::vector<double> grads = Flatten(analytic.gradients);
  double grad_err = std::numeric_limits<double>::infinity();
  std::ostringstream detail;
  if (grads.size() == numeric.size() && analytic.gradients.size() == params.size()) {
    grad_err = oracle::MaxRelativeError(grads, numeric, oracle::kRelativeErrorFloor);
    std::size_t offset = 0;
    std::string worst_group;
    double worst = -1.0;
    for (const auto& [name, t] : params) {
      std::vector<double> a(grads.begin() + offset, grads.begin() + offset + t.size());
      std::vector<double> nm(numeric.begin() + offset, numeric.begin() + offset + t.size());
      const double e = oracle::MaxRelativeError(a, nm, oracle::kRelativeErrorFloor);
      if (e > worst) {
        worst = e;
        worst_group = name;
      }
      offset += t.size();
    }
    detail << "groups=" << params.size() << " params=" << grads.size()
           << " worst_group=" << worst_group;
  } else {
    detail << "gradient layout mismatch";
  }
  detail << " forward_err=" << fedbook::FormatDouble(forward_err);
  // The forward value must agree to 1e-10 as well; fold it into the error.
  const double err = forward_err > 1e-10 ? std::max(grad_err, 1.0) : grad_err;
  return Finish("pre-training loss gradients (finite differences)", err, 1e-4, detail.str());
}

CheckResult CheckReconstructionLosses(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x53);
  double worst = 0.0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = Uniform(rng, 1, 8), d = Uniform(rng, 1, 5);
    const Tensor x = Gaussian({n, d}, rng), x_hat = Gaussian({n, d}, rng);
    const double gamma = static_cast<double>(Uniform(rng, 1, 3));
    worst = std::max(worst, RelDiff(hooks.feature_loss(x, x_hat, gamma),
                                    oracle::LoopFeatureLoss(x, x_hat, gamma)));
    Tensor a({n, n});
    for (double& v : a.data()) v = static_cast<double>(Uniform(rng, 0, 1));
    worst = std::max(worst, RelDiff(hooks.topology_loss(a, x_hat),
                                    oracle::LoopTopologyLoss(a, x_hat)));
  }
  return Finish("feature and topology reconstruction losses", worst, 1e-12,
                "instances=" + std::to_string(trials));
}

CheckResult CheckPrediction(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x54);
  double worst = 0.0;
  const std::size_t trials = 100;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t c = Uniform(rng, 2, 5), d = Uniform(rng, 1, 6);
    fedbook::PrototypeHead proto{Gaussian({c, d}, rng), Tensor(), {}};
    fedbook::LinearHead lin{Gaussian({d, c}, rng), Gaussian({c}, rng)};
    const Tensor z = Gaussian({d}, rng);
    const auto got = hooks.predict(z.data(), proto, lin);
    const auto want = oracle::LoopCombinedPrediction(Values(z), proto.prototypes, lin.weight, lin.bias);
    worst = std::max(worst, MaxDiff(got, want));
  }
  return Finish("prototype and linear head prediction", worst, 1e-12,
                "instances=" + std::to_string(trials));
}

CheckResult CheckTokenSimilarity(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x55);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    for (const auto& a : uploads)
      for (const auto& b : uploads)
        for (std::size_t h = 0; h < a.tokens().shape()[0]; ++h) {
          const Tensor s = hooks.token_similarity(a.tokens(), b.tokens(), h);
          const auto want = oracle::LoopTokenSimilarity(a.tokens(), b.tokens(), h);
          std::vector<double> flat;
          for (const auto& row : want) flat.insert(flat.end(), row.begin(), row.end());
          worst = std::max(worst, MaxDiff(Values(s), flat));
        }
  }
  return Finish("token cosine similarity", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckAlignmentMask(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x56);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const std::size_t n = Uniform(rng, 1, 8);
    Tensor s({n, n});
    for (double& v : s.data()) v = UniformReal(rng, -1.0, 1.0);
    std::vector<std::uint64_t> fa(n), fb(n);
    for (auto& v : fa) v = Uniform(rng, 0, 4);
    for (auto& v : fb) v = Uniform(rng, 0, 4);
    const auto got = hooks.alignment_mask(s, fa, fb);
    const auto keep = oracle::LoopMask(fa, fb);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const bool k = got.kept(i, j);
        const double v = got.values(i, j);
        const bool value_ok = keep[i][j] ? v == s(i, j) : (std::isinf(v) && v < 0);
        if (k != keep[i][j] || !value_ok) worst = std::max(worst, 1.0);
      }
  }
  return Finish("frequency alignment mask", worst, 0.0,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckCodebookUpdate(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x57);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    const double lambda = t % 10 == 0 ? 0.0 : UniformReal(rng, 0.0, 1.0);
    const auto got = hooks.codebook_update(uploads, lambda);
    std::vector<Tensor> tokens;
    std::vector<oracle::Counts> freqs;
    for (const auto& u : uploads) {
      tokens.push_back(u.tokens());
      freqs.push_back(u.counters.raw());
    }
    const auto want = oracle::MaterializedCodebookUpdate(tokens, freqs, lambda);
    if (got.size() != want.size()) return Finish("codebook update", 1.0, 1e-10, "size mismatch");
    for (std::size_t k = 0; k < got.size(); ++k)
      worst = std::max(worst, MaxDiff(Values(got[k]), Values(want[k])));
  }
  return Finish("frequency-guided codebook update", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckClientSimilarity(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x58);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    for (const auto& a : uploads)
      for (const auto& b : uploads)
        worst = std::max(worst, std::abs(hooks.client_similarity(a.tokens(), b.tokens()) -
                                         oracle::LoopClientSimilarity(a.tokens(), b.tokens())));
  }
  return Finish("client similarity", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckPersonalized(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x59);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    const std::size_t k = uploads.size();
    const Tensor delta = RandomDelta(k, rng);
    const auto got = hooks.personalized(uploads, delta);
    std::vector<oracle::Flat> params, rows;
    for (const auto& u : uploads) params.push_back(Flatten(fedbook::OtherParams(u.params)));
    for (std::size_t a = 0; a < k; ++a) rows.push_back({delta.row(a).begin(), delta.row(a).end()});
    const auto want = oracle::LoopPersonalized(params, rows);
    if (got.size() != k) return Finish("personalized parameters", 1.0, 1e-10, "size mismatch");
    for (std::size_t a = 0; a < k; ++a) {
      if (got[a].count(param::kTokens)) worst = std::max(worst, 1.0);
      worst = std::max(worst, MaxDiff(Flatten(got[a]), want[a]));
    }
  }
  return Finish("similarity-weighted personalized parameters", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckDistinctiveness(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x5a);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const std::size_t k = Uniform(rng, 1, 4);
    const Tensor delta = RandomDelta(k, rng);
    std::vector<oracle::Flat> rows;
    for (std::size_t a = 0; a < k; ++a) rows.push_back({delta.row(a).begin(), delta.row(a).end()});
    worst = std::max(worst, MaxDiff(hooks.distinctiveness(delta), oracle::LoopDistinctiveness(rows)));
  }
  return Finish("domain distinctiveness", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckGlobalAggregate(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::mt19937_64 rng(opt.seed ^ 0x5b);
  double worst = 0.0;
  for (std::size_t t = 0; t < opt.aggregation_instances; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    std::vector<double> nabla(uploads.size());
    for (double& v : nabla) v = UniformReal(rng, -1.0, 2.0);
    std::vector<oracle::Flat> params;
    for (const auto& u : uploads) params.push_back(Flatten(u.params));
    worst = std::max(worst, MaxDiff(Flatten(hooks.global_aggregate(uploads, nabla)),
                                    oracle::LoopGlobal(params, nabla)));
  }
  return Finish("distinctiveness-weighted global aggregation", worst, 1e-10,
                "instances=" + std::to_string(opt.aggregation_instances));
}

CheckResult CheckAutodiffOps(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x60);
  const Tensor x = Magnitudes({4, 3}, rng);
  const Tensor target = Magnitudes({4, 2}, rng);
  ParamSet params{{"b1", Magnitudes({3}, rng)},
                  {"b2", Magnitudes({2}, rng)},
                  {"w1", Magnitudes({3, 3}, rng)},
                  {"w2", Magnitudes({3, 2}, rng)}};
  auto forward = [&](const ParamSet& p, ParamSet* grads) {
    fedbook::Tape tape;
    std::map<std::string, fedbook::Var> v;
    for (const auto& [name, t] : p) v[name] = tape.Parameter(t);
    namespace ad = fedbook::ad;
    auto h = ad::Sigmoid(ad::AddRowVector(ad::MatMul(tape.Constant(x), v["w1"]), v["b1"]));
    auto out = ad::SoftmaxRows(ad::AddRowVector(ad::MatMul(h, v["w2"]), v["b2"]));
    auto loss = ad::Add(ad::Sum(ad::Mul(out, tape.Constant(target))), ad::Mean(ad::Square(h)));
    if (grads) {
      tape.Backward(loss);
      for (const auto& [name, var] : v) (*grads)[name] = tape.Gradient(var);
    }
    return loss.value().item();
  };
  ParamSet grads;
  forward(params, &grads);
  const auto numeric = oracle::CentralDifferences(
      [&](const std::vector<double>& flat) { return forward(Unflatten(params, flat), nullptr); },
      Flatten(params), 1e-5);
  const double err = oracle::MaxRelativeError(Flatten(grads), numeric, oracle::kRelativeErrorFloor);
  return Finish("autodiff two-layer network gradients", err, 1e-4,
                "params=" + std::to_string(numeric.size()));
}

CheckResult CheckLambdaOneNoOp(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x61);
  std::size_t changed = 0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 3, 8, 6), rng);
    const auto out = fedbook::UpdateCodebooksPhase1(uploads, 1.0);
    for (std::size_t k = 0; k < uploads.size(); ++k)
      if (!(out[k] == uploads[k].tokens())) ++changed;
  }
  return Finish("invariant lambda=1 leaves codebooks bit-identical", static_cast<double>(changed),
                0.0, "instances=" + std::to_string(trials));
}

CheckResult CheckIdenticalUploadFixpoint(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x62);
  double worst = 0.0, bound_violation = 0.0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    UploadShape shape = RandomUploadShape(rng, 4, 2, 8, 6);
    if (t % 2 == 0) shape.tokens = 1;
    const auto one = RandomUploads(UploadShape{1, shape.heads, shape.tokens, shape.dim}, rng);
    std::vector<ClientUpload> uploads(shape.clients, one.front());
    for (std::size_t k = 0; k < uploads.size(); ++k) uploads[k].client_id = k;
    const double lambda = UniformReal(rng, 0.0, 1.0);
    const auto p1 = fedbook::RunPhase1(uploads, lambda);
    const auto p2 = fedbook::RunPhase2(uploads);
    const auto ref_other = Flatten(fedbook::OtherParams(one.front().params));
    const Tensor& ref_tokens = one.front().tokens();
    double max_norm = 0.0;
    for (std::size_t r = 0; r < ref_tokens.shape()[0] * ref_tokens.shape()[1]; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < shape.dim; ++c) s += std::pow(ref_tokens[r * shape.dim + c], 2);
      max_norm = std::max(max_norm, std::sqrt(s));
    }
    for (const auto& p : p1.personalized) {
      worst = std::max(worst, MaxDiff(Flatten(fedbook::OtherParams(p)), ref_other));
      const Tensor& tok = p.at(param::kTokens);
      if (shape.tokens == 1) {
        worst = std::max(worst, MaxDiff(Values(tok), Values(ref_tokens)));
      } else {
        for (std::size_t r = 0; r < tok.shape()[0] * tok.shape()[1]; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < shape.dim; ++c) s += std::pow(tok[r * shape.dim + c], 2);
          bound_violation = std::max(bound_violation, std::sqrt(s) - max_norm);
        }
      }
    }
    worst = std::max(worst, MaxDiff(Flatten(p2.global), Flatten(one.front().params)));
  }
  std::ostringstream detail;
  detail << "instances=" << trials << " norm_bound_excess=" << fedbook::FormatDouble(bound_violation);
  return Finish("invariant identical uploads are a fixpoint",
                std::max(worst, bound_violation > 1e-12 ? 1.0 : 0.0), 1e-12, detail.str());
}

CheckResult CheckPermutationEquivariance(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x63);
  double worst = 0.0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    const std::size_t k = uploads.size();
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ClientUpload> permuted;
    for (std::size_t i = 0; i < k; ++i) permuted.push_back(uploads[perm[i]]);
    const double lambda = UniformReal(rng, 0.0, 1.0);
    const auto a = fedbook::RunPhase1(uploads, lambda);
    const auto b = fedbook::RunPhase1(permuted, lambda);
    for (std::size_t i = 0; i < k; ++i)
      worst = std::max(worst, MaxDiff(Flatten(b.personalized[i]), Flatten(a.personalized[perm[i]])));
    worst = std::max(worst, MaxDiff(Flatten(fedbook::RunPhase2(uploads).global),
                                    Flatten(fedbook::RunPhase2(permuted).global)));
    worst = std::max(worst, MaxDiff(Flatten(fedbook::FedAvgAggregate(uploads)),
                                    Flatten(fedbook::FedAvgAggregate(permuted))));
  }
  return Finish("invariant client permutation equivariance", worst, 1e-12,
                "instances=" + std::to_string(trials));
}

CheckResult CheckFrequencyScaling(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x64);
  std::size_t changed = 0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    auto scaled = uploads;
    for (auto& u : scaled)
      for (std::size_t h = 0; h < u.counters.heads(); ++h)
        for (std::size_t j = 0; j < u.counters.tokens(); ++j) u.counters.at(h, j) *= 7;
    const double lambda = UniformReal(rng, 0.0, 1.0);
    const auto a = fedbook::RunPhase1(uploads, lambda);
    const auto b = fedbook::RunPhase1(scaled, lambda);
    if (!(a.personalized == b.personalized) || !(a.client_similarity == b.client_similarity)) {
      ++changed;
    }
  }
  return Finish("invariant frequency x7 leaves phase 1 unchanged", static_cast<double>(changed),
                0.0, "instances=" + std::to_string(trials));
}

CheckResult CheckFedAvgConsistency(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x65);
  double worst = 0.0;
  const std::size_t trials = 50;
  for (std::size_t t = 0; t < trials; ++t) {
    auto uploads = RandomUploads(RandomUploadShape(rng, 4, 2, 8, 6), rng);
    const std::size_t m = Uniform(rng, 1, 40);
    for (auto& u : uploads) u.sample_count = m;
    std::vector<oracle::Flat> params;
    for (const auto& u : uploads) params.push_back(Flatten(u.params));
    const auto mean = oracle::LoopWeightedMean(
        params, oracle::Flat(uploads.size(), 1.0 / static_cast<double>(uploads.size())));
    const auto avg = Flatten(fedbook::FedAvgAggregate(uploads));
    const std::vector<double> uniform(uploads.size(), UniformReal(rng, -1.0, 1.0));
    worst = std::max({worst, MaxDiff(avg, mean),
                      MaxDiff(avg, Flatten(fedbook::GlobalAggregatePhase2(uploads, uniform)))});
  }
  return Finish("invariant fedavg equals uniform phase 2 at equal counts", worst, 1e-12,
                "instances=" + std::to_string(trials));
}

CheckResult CheckMetricOracles(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed ^ 0x66);
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < opt.metric_sets; ++t) {
    const std::size_t m = Uniform(rng, 2, 30), c = Uniform(rng, 2, 5);
    Tensor probs({m, c});
    // Coarse grid so that ties occur.
    for (double& v : probs.data()) v = static_cast<double>(Uniform(rng, 0, 10)) / 10.0;
    std::vector<std::size_t> labels(m);
    for (auto& l : labels) l = Uniform(rng, 0, c - 1);
    if (fedbook::Accuracy(probs, labels) != oracle::CountingAccuracy(probs, labels)) ++mismatches;

    const std::size_t cols = Uniform(rng, 1, 4);
    Tensor scores({m, cols}), targets({m, cols});
    for (double& v : scores.data()) v = static_cast<double>(Uniform(rng, 0, 10)) / 10.0;
    for (double& v : targets.data()) v = static_cast<double>(Uniform(rng, 0, 1));
    // Guarantee one column with both classes.
    targets(0, 0) = 1.0;
    targets(1, 0) = 0.0;
    if (fedbook::AucRoc(scores, targets) != oracle::PairCountingAuc(scores, targets)) ++mismatches;
  }
  return Finish("metrics accuracy and auc-roc vs pair counting", static_cast<double>(mismatches),
                0.0, "sets=" + std::to_string(opt.metric_sets));
}

std::vector<CheckResult> RunVerification(const VerifyOptions& opt, const VerifyHooks& hooks) {
  std::vector<CheckResult> out;
  auto guarded = [&](auto&& fn, const char* name) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back(CheckResult{name, false, std::numeric_limits<double>::infinity(), 0.0,
                                std::string("threw: ") + e.what()});
    }
  };
  guarded([&] { return CheckQuantization(opt, hooks); }, "nearest-token quantization");
  guarded([&] { return CheckPretrainGradients(opt, hooks); }, "pre-training loss gradients (finite differences)");
  guarded([&] { return CheckReconstructionLosses(opt, hooks); }, "feature and topology reconstruction losses");
  guarded([&] { return CheckPrediction(opt, hooks); }, "prototype and linear head prediction");
  guarded([&] { return CheckTokenSimilarity(opt, hooks); }, "token cosine similarity");
  guarded([&] { return CheckAlignmentMask(opt, hooks); }, "frequency alignment mask");
  guarded([&] { return CheckCodebookUpdate(opt, hooks); }, "frequency-guided codebook update");
  guarded([&] { return CheckClientSimilarity(opt, hooks); }, "client similarity");
  guarded([&] { return CheckPersonalized(opt, hooks); }, "similarity-weighted personalized parameters");
  guarded([&] { return CheckDistinctiveness(opt, hooks); }, "domain distinctiveness");
  guarded([&] { return CheckGlobalAggregate(opt, hooks); }, "distinctiveness-weighted global aggregation");
  guarded([&] { return CheckAutodiffOps(opt); }, "autodiff");
  guarded([&] { return CheckLambdaOneNoOp(opt); }, "lambda");
  guarded([&] { return CheckIdenticalUploadFixpoint(opt); }, "fixpoint");
  guarded([&] { return CheckPermutationEquivariance(opt); }, "permutation");
  guarded([&] { return CheckFrequencyScaling(opt); }, "frequency");
  guarded([&] { return CheckFedAvgConsistency(opt); }, "fedavg");
  guarded([&] { return CheckMetricOracles(opt); }, "metrics");
  return out;
}

std::string FormatCheck(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << r.name << "  max_err=" << fedbook::FormatDouble(r.max_error)
      << " tol=" << fedbook::FormatDouble(r.tolerance);
  if (!r.detail.empty()) out << "  " << r.detail;
  return out.str();
}

}  // namespace app
