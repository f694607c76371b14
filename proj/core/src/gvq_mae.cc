#include "fedbook/gvq_mae.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbook/errors.h"

namespace fedbook {

void ModelConfig::Validate() const {
  if (feature_dim == 0 || hidden_dim == 0) throw ConfigError("model dims must be positive");
  if (heads == 0) throw ConfigError("codebook needs at least one head");
  if (tokens == 0) throw ConfigError("codebook heads need at least one token");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must be in [0,1)");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
}

namespace {

Tensor Gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

ParamSet InitParams(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  constexpr double kWeightStd = 0.02;
  const std::size_t d = config.feature_dim, de = config.edge_feature_dim,
                    dh = config.hidden_dim, h = config.heads, n = config.tokens;
  std::mt19937_64 rng(seed);
  ParamSet p;
  p[param::kEnc1Self] = Gaussian({d, dh}, kWeightStd, rng);
  p[param::kEnc1Neigh] = Gaussian({d, dh}, kWeightStd, rng);
  if (de > 0) p[param::kEnc1Edge] = Gaussian({de, dh}, kWeightStd, rng);
  p[param::kEnc1Bias] = Tensor::Zeros({dh});
  p[param::kEnc2Self] = Gaussian({dh, dh}, kWeightStd, rng);
  p[param::kEnc2Neigh] = Gaussian({dh, dh}, kWeightStd, rng);
  if (de > 0) p[param::kEnc2Edge] = Gaussian({de, dh}, kWeightStd, rng);
  p[param::kEnc2Bias] = Tensor::Zeros({dh});

  Tensor tokens = Gaussian({h, n, dh}, 1.0, rng);
  for (std::size_t r = 0; r < h * n; ++r) {
    auto row = std::span<double>(tokens.data()).subspan(r * dh, dh);
    const double norm = std::sqrt(Dot(row, row));
    for (double& v : row) v /= norm;
  }
  p[param::kTokens] = std::move(tokens);
  p[param::kProjection] = Gaussian({h * dh, dh}, kWeightStd, rng);
  p[param::kDecoder] = Gaussian({dh, d}, kWeightStd, rng);
  p[param::kMask] = Gaussian({d}, kWeightStd, rng);
  return p;
}

void CheckLayout(const ParamSet& params, const ModelConfig& config) {
  RequireSameLayout(params, InitParams(config, 0));
}

PreparedGraph::PreparedGraph(const TextAttributedGraph& g)
    : graph(&g),
      adjacency(DenseAdjacency(g)),
      neighbor_mean(NeighborMeanOperator(g)),
      edge_mean(IncidentEdgeFeatureMean(g)) {}

BoundParams::BoundParams(Tape& tape, const ParamSet& params) : tape_(&tape) {
  for (const auto& [name, t] : params) vars_.emplace(name, tape.Parameter(t));
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("missing parameter " + name);
  return it->second;
}

ParamSet BoundParams::Gradients() const {
  ParamSet out;
  for (const auto& [name, v] : vars_) out.emplace(name, tape_->Gradient(v));
  return out;
}

std::vector<std::size_t> ChooseMaskedRows(std::size_t n, double ratio, std::uint64_t seed) {
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  if (count == 0) return {};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

Var EncoderLayer(const PreparedGraph& g, Var h, const BoundParams& params,
                 const char* self_w, const char* neigh_w, const char* edge_w,
                 const char* bias) {
  Tape& tape = params.tape();
  Var neigh_op = tape.Constant(g.neighbor_mean);
  Var out = ad::Add(ad::MatMul(h, params[self_w]),
                    ad::MatMul(ad::MatMul(neigh_op, h), params[neigh_w]));
  if (!g.edge_mean.empty() && params.contains(edge_w)) {
    out = ad::Add(out, ad::MatMul(tape.Constant(g.edge_mean), params[edge_w]));
  }
  return ad::AddRowVector(out, params[bias]);
}

}  // namespace

Var Encode(const PreparedGraph& g, const BoundParams& params,
           std::span<const std::size_t> masked_rows) {
  const TextAttributedGraph& graph = *g.graph;
  const Tensor& w1 = params[param::kEnc1Self].value();
  if (w1.rows() != graph.feature_dim()) {
    throw ContractError("encoder expects feature dim " + std::to_string(w1.rows()) +
                        ", graph has " + std::to_string(graph.feature_dim()));
  }
  if (!g.edge_mean.empty() && params.contains(param::kEnc1Edge) &&
      params[param::kEnc1Edge].value().rows() != g.edge_mean.cols()) {
    throw ContractError("edge feature dim does not match the encoder");
  }
  Tape& tape = params.tape();
  Var x = ad::MaskRows(tape.Constant(graph.node_features), masked_rows, params[param::kMask]);
  Var h1 = ad::Relu(EncoderLayer(g, x, params, param::kEnc1Self, param::kEnc1Neigh,
                                 param::kEnc1Edge, param::kEnc1Bias));
  return EncoderLayer(g, h1, params, param::kEnc2Self, param::kEnc2Neigh, param::kEnc2Edge,
                      param::kEnc2Bias);
}

std::vector<std::size_t> NearestTokens(const Tensor& z, const Tensor& tokens,
                                       std::size_t head) {
  if (tokens.rank() != 3 || head >= tokens.shape()[0]) {
    throw DimensionError("bad token table " + ShapeToString(tokens.shape()));
  }
  const std::size_t n_tokens = tokens.shape()[1], dim = tokens.shape()[2];
  if (n_tokens == 0) throw ContractError("codebook head has no tokens");
  if (z.cols() != dim) {
    throw DimensionError("embedding width " + std::to_string(z.cols()) +
                         " vs token width " + std::to_string(dim));
  }
  const auto table = tokens.data().subspan(head * n_tokens * dim, n_tokens * dim);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    std::size_t best = 0;
    double best_d = SquaredDistance(row, table.subspan(0, dim));
    for (std::size_t j = 1; j < n_tokens; ++j) {
      const double dj = SquaredDistance(row, table.subspan(j * dim, dim));
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    out[r] = best;
  }
  return out;
}

Quantized Quantize(Var z, const BoundParams& params, FrequencyCounters* counters) {
  Var tokens = params[param::kTokens];
  const std::size_t heads = tokens.value().shape()[0];
  if (counters && (counters->heads() != heads || counters->tokens() != tokens.value().shape()[1])) {
    throw DimensionError("frequency counters do not match the codebook");
  }
  Quantized q;
  std::vector<Var> per_head;
  for (std::size_t h = 0; h < heads; ++h) {
    auto idx = NearestTokens(z.value(), tokens.value(), h);
    if (counters)
      for (std::size_t j : idx) ++counters->at(h, j);
    per_head.push_back(ad::GatherHeadRows(tokens, h, idx));
    q.indices.push_back(std::move(idx));
  }
  q.zq = ad::MatMul(ad::ConcatCols(per_head), params[param::kProjection]);
  return q;
}

Var FeatureLoss(Var x, Var x_hat, double gamma) {
  Var one_minus_cos = ad::Affine(ad::CosineRows(x, x_hat), -1.0, 1.0);
  return ad::Mean(ad::Pow(one_minus_cos, gamma));
}

Var TopologyLoss(Var adjacency, Var x_hat) {
  Var logits = ad::MatMul(x_hat, ad::Transpose(x_hat));
  return ad::Sum(ad::Square(ad::Sub(adjacency, ad::Sigmoid(logits))));
}

LossTerms PretrainLoss(const std::vector<PreparedGraph>& graphs, const BoundParams& params,
                       const ModelConfig& config, std::uint64_t mask_seed,
                       FrequencyCounters* counters) {
  if (graphs.empty()) throw ContractError("pretrain loss over zero graphs");
  Tape& tape = params.tape();
  std::size_t total_nodes = 0;
  for (const auto& g : graphs) total_nodes += g.graph->node_count;
  const double inv_total = 1.0 / static_cast<double>(total_nodes);

  std::mt19937_64 seeds(mask_seed);
  LossTerms terms;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const PreparedGraph& g = graphs[gi];
    const std::size_t n = g.graph->node_count;
    const double share = static_cast<double>(n) * inv_total;
    const auto masked = ChooseMaskedRows(n, config.mask_ratio, seeds());

    Var x = tape.Constant(g.graph->node_features);
    Var z = Encode(g, params, masked);
    Quantized q = Quantize(z, params, counters);
    Var x_hat = ad::MatMul(ad::StraightThrough(z, q.zq), params[param::kDecoder]);

    Var feat = ad::Scale(FeatureLoss(x, x_hat, config.gamma), share);
    Var topo = TopologyLoss(tape.Constant(g.adjacency), x_hat);
    Var cb = ad::Scale(ad::Sum(ad::Square(ad::Sub(ad::StopGradient(z), q.zq))), inv_total);
    Var cm = ad::Scale(ad::Sum(ad::Square(ad::Sub(z, ad::StopGradient(q.zq)))), inv_total);
    if (gi == 0) {
      terms.feature = feat;
      terms.topology = topo;
      terms.codebook = cb;
      terms.commitment = cm;
    } else {
      terms.feature = ad::Add(terms.feature, feat);
      terms.topology = ad::Add(terms.topology, topo);
      terms.codebook = ad::Add(terms.codebook, cb);
      terms.commitment = ad::Add(terms.commitment, cm);
    }
  }
  terms.total = ad::Add(ad::Add(terms.feature, terms.topology),
                        ad::Add(terms.codebook, terms.commitment));
  return terms;
}

double EvaluatePretrainLoss(const std::vector<PreparedGraph>& graphs, const ParamSet& params,
                            const ModelConfig& config, std::uint64_t mask_seed) {
  Tape tape;
  BoundParams bound(tape, params);
  return PretrainLoss(graphs, bound, config, mask_seed, nullptr).total.value().item();
}

LocalTrainResult LocalTrain(const std::vector<TextAttributedGraph>& data, ParamSet params,
                            const ModelConfig& config, const TrainConfig& train,
                            std::mt19937_64& rng) {
  if (train.epochs == 0) throw ConfigError("local training needs at least one epoch");
  if (data.empty()) throw ContractError("client has no graphs");
  std::vector<PreparedGraph> prepared;
  prepared.reserve(data.size());
  for (const auto& g : data) prepared.emplace_back(g);

  LocalTrainResult result;
  result.sample_count = InstanceCount(data);
  result.counters = FrequencyCounters(config.heads, config.tokens);
  Optimizer optimizer(train.optimizer);

  const std::size_t batch =
      train.batch_size == 0 ? prepared.size() : std::min(train.batch_size, prepared.size());
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    if (batch < prepared.size()) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<PreparedGraph> chunk;
      for (std::size_t i = start; i < std::min(start + batch, order.size()); ++i)
        chunk.push_back(prepared[order[i]]);
      Tape tape;
      BoundParams bound(tape, params);
      LossTerms loss = PretrainLoss(chunk, bound, config, rng(), &result.counters);
      tape.Backward(loss.total);
      optimizer.Step(params, bound.Gradients());
      epoch_loss += loss.total.value().item();
      ++batches;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.params = std::move(params);
  return result;
}

}  // namespace fedbook
