#include "fedbook/finetune.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "fedbook/autodiff.h"
#include "fedbook/errors.h"
#include "fedbook/gvq_mae.h"

namespace fedbook {

std::string ToString(Metric metric) {
  return metric == Metric::kAccuracy ? "accuracy" : "auc_roc";
}

Metric ParseMetric(const std::string& text) {
  if (text == "accuracy" || text == "acc") return Metric::kAccuracy;
  if (text == "auc_roc" || text == "auc") return Metric::kAucRoc;
  throw ConfigError("unknown metric '" + text + "'");
}

void TaskSpec::Validate(bool multilabel) const {
  const bool wants_auc = level == LabelLevel::kGraph && multilabel;
  if (wants_auc && metric != Metric::kAucRoc) {
    throw ConfigError("multi-label graph tasks are scored by auc_roc");
  }
  if (!wants_auc && metric != Metric::kAccuracy) {
    throw ConfigError("auc_roc applies only to multi-label graph tasks");
  }
  if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction >= 1.0) {
    throw ConfigError("split fractions must leave a non-empty test share");
  }
}

Tensor QuantizedNodeEmbeddings(const TextAttributedGraph& g, const ParamSet& backbone) {
  Tape tape;
  BoundParams bound(tape, backbone);
  PreparedGraph prepared(g);
  Var z = Encode(prepared, bound, {});
  return Quantize(z, bound, nullptr).zq.value();
}

Tensor EmbedInstances(const TextAttributedGraph& g, const ParamSet& backbone, LabelLevel level) {
  if (level != g.level) {
    throw ContractError("task level " + ToString(level) + " does not match graph labels (" +
                        ToString(g.level) + ")");
  }
  const Tensor zq = QuantizedNodeEmbeddings(g, backbone);
  const std::size_t dh = zq.cols();
  switch (level) {
    case LabelLevel::kNode:
      return zq;
    case LabelLevel::kEdge: {
      Tensor out({g.edges.size(), dh});
      for (std::size_t e = 0; e < g.edges.size(); ++e)
        for (std::size_t c = 0; c < dh; ++c)
          out(e, c) = zq(g.edges[e].src, c) * zq(g.edges[e].dst, c);
      return out;
    }
    case LabelLevel::kGraph: {
      Tensor out({1, dh});
      for (std::size_t v = 0; v < zq.rows(); ++v)
        for (std::size_t c = 0; c < dh; ++c) out(0, c) += zq(v, c);
      for (std::size_t c = 0; c < dh; ++c) out(0, c) /= static_cast<double>(zq.rows());
      return out;
    }
  }
  return zq;
}

InstanceSet CollectInstances(const std::vector<TextAttributedGraph>& graphs,
                             const ParamSet& backbone, LabelLevel level) {
  if (graphs.empty()) throw ContractError("no graphs to embed");
  InstanceSet set;
  set.multilabel = level == LabelLevel::kGraph && graphs.front().multilabel;
  std::vector<Tensor> parts;
  std::vector<std::int64_t> raw;
  std::vector<double> targets;
  std::size_t label_width = 0;
  for (const auto& g : graphs) {
    parts.push_back(EmbedInstances(g, backbone, level));
    switch (level) {
      case LabelLevel::kNode: raw.insert(raw.end(), g.node_labels.begin(), g.node_labels.end()); break;
      case LabelLevel::kEdge: raw.insert(raw.end(), g.edge_labels.begin(), g.edge_labels.end()); break;
      case LabelLevel::kGraph:
        if (set.multilabel) {
          if (label_width == 0) label_width = g.graph_labels.size();
          if (g.graph_labels.size() != label_width) {
            throw ContractError("multi-label graphs disagree on label count");
          }
          for (auto b : g.graph_labels) targets.push_back(static_cast<double>(b));
        } else {
          raw.push_back(g.graph_labels.at(0));
        }
        break;
    }
  }
  std::size_t rows = 0;
  const std::size_t dh = parts.front().cols();
  for (const auto& p : parts) rows += p.rows();
  set.embeddings = Tensor({rows, dh});
  std::size_t r = 0;
  for (const auto& p : parts)
    for (std::size_t i = 0; i < p.rows(); ++i, ++r)
      std::copy(p.row(i).begin(), p.row(i).end(), set.embeddings.row(r).begin());

  if (set.multilabel) {
    set.multilabel_targets = Tensor({rows, label_width}, std::move(targets));
  } else {
    set.classes = raw;
    std::sort(set.classes.begin(), set.classes.end());
    set.classes.erase(std::unique(set.classes.begin(), set.classes.end()), set.classes.end());
    for (auto l : raw) {
      set.labels.push_back(static_cast<std::size_t>(
          std::lower_bound(set.classes.begin(), set.classes.end(), l) - set.classes.begin()));
    }
  }
  return set;
}

PrototypeHead FitPrototypes(const Tensor& embeddings, std::span<const std::size_t> labels,
                            std::size_t class_count) {
  if (labels.size() != embeddings.rows()) throw DimensionError("one label per embedding row");
  const std::size_t dh = embeddings.cols();
  PrototypeHead head;
  head.prototypes = Tensor({class_count, dh});
  std::vector<std::size_t> counts(class_count, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_count) throw ContractError("label outside the class range");
    ++counts[labels[i]];
    for (std::size_t c = 0; c < dh; ++c) head.prototypes(labels[i], c) += embeddings(i, c);
  }
  std::string empty;
  for (std::size_t k = 0; k < class_count; ++k) {
    if (counts[k] == 0) {
      empty += (empty.empty() ? "" : ", ") + std::to_string(k);
      continue;
    }
    for (std::size_t c = 0; c < dh; ++c) head.prototypes(k, c) /= static_cast<double>(counts[k]);
  }
  if (!empty.empty()) throw ContractError("no training instances for class " + empty);
  return head;
}

PrototypeHead FitMultilabelPrototypes(const Tensor& embeddings, const Tensor& targets) {
  const std::size_t m = embeddings.rows(), dh = embeddings.cols(), labels = targets.cols();
  if (targets.rows() != m) throw DimensionError("one target row per embedding row");
  PrototypeHead head;
  head.prototypes = Tensor({labels, dh});
  head.negative_prototypes = Tensor({labels, dh});
  head.fallback.assign(labels, -1.0);
  for (std::size_t l = 0; l < labels; ++l) {
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < m; ++i) {
      Tensor& dst = targets(i, l) > 0.5 ? head.prototypes : head.negative_prototypes;
      (targets(i, l) > 0.5 ? pos : neg) += 1;
      for (std::size_t c = 0; c < dh; ++c) dst(l, c) += embeddings(i, c);
    }
    for (std::size_t c = 0; c < dh; ++c) {
      if (pos) head.prototypes(l, c) /= static_cast<double>(pos);
      if (neg) head.negative_prototypes(l, c) /= static_cast<double>(neg);
    }
    if (pos == 0 || neg == 0) head.fallback[l] = pos ? 1.0 : 0.0;
  }
  return head;
}

namespace {

void SoftmaxInPlace(std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

std::vector<double> LinearLogits(std::span<const double> z, const LinearHead& lin) {
  const std::size_t classes = lin.weight.cols();
  if (z.size() != lin.weight.rows()) throw DimensionError("embedding width vs linear head");
  std::vector<double> logits(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    double s = lin.bias[k];
    for (std::size_t c = 0; c < z.size(); ++c) s += z[c] * lin.weight(c, k);
    logits[k] = s;
  }
  return logits;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// P(positive) per label from the one-vs-rest prototype pair.
std::vector<double> MultilabelPrototypeProbabilities(std::span<const double> z,
                                                     const PrototypeHead& proto) {
  const std::size_t labels = proto.prototypes.rows();
  std::vector<double> out(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    if (proto.fallback[l] >= 0.0) {
      out[l] = proto.fallback[l];
      continue;
    }
    const double dp = SquaredDistance(z, proto.prototypes.row(l));
    const double dn = SquaredDistance(z, proto.negative_prototypes.row(l));
    out[l] = Sigmoid(dn - dp);  // = e^{-dp} / (e^{-dp} + e^{-dn})
  }
  return out;
}

}  // namespace

std::vector<double> PrototypeProbabilities(std::span<const double> z, const PrototypeHead& proto) {
  const std::size_t classes = proto.prototypes.rows();
  if (z.size() != proto.prototypes.cols()) throw DimensionError("embedding width vs prototypes");
  std::vector<double> neg_dist(classes);
  for (std::size_t k = 0; k < classes; ++k)
    neg_dist[k] = -SquaredDistance(z, proto.prototypes.row(k));
  SoftmaxInPlace(neg_dist);
  return neg_dist;
}

std::vector<double> LinearProbabilities(std::span<const double> z, const LinearHead& lin) {
  auto logits = LinearLogits(z, lin);
  SoftmaxInPlace(logits);
  return logits;
}

std::vector<double> Predict(std::span<const double> z, const PrototypeHead& proto,
                            const LinearHead& lin) {
  const auto pp = PrototypeProbabilities(z, proto);
  const auto pl = LinearProbabilities(z, lin);
  if (pp.size() != pl.size()) throw DimensionError("heads disagree on class count");
  std::vector<double> out(pp.size());
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = 0.5 * (pp[k] + pl[k]);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor PredictBatch(const Tensor& embeddings, const PrototypeHead& proto, const LinearHead& lin,
                    bool multilabel) {
  const std::size_t m = embeddings.rows(), classes = lin.weight.cols();
  Tensor out({m, classes});
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> p;
    if (multilabel) {
      p = MultilabelPrototypeProbabilities(embeddings.row(i), proto);
      const auto logits = LinearLogits(embeddings.row(i), lin);
      for (std::size_t l = 0; l < classes; ++l) p[l] = 0.5 * (p[l] + Sigmoid(logits[l]));
    } else {
      p = Predict(embeddings.row(i), proto, lin);
    }
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

double Accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size()) throw DimensionError("one label per prediction row");
  if (labels.empty()) throw ContractError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probs.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double AucRoc(const Tensor& scores, const Tensor& targets) {
  if (scores.shape() != targets.shape()) throw DimensionError("scores and targets differ in shape");
  const std::size_t m = scores.rows(), labels = scores.cols();
  double total = 0.0;
  std::size_t valid = 0;
  std::vector<std::size_t> order(m);
  std::vector<double> rank(m);
  for (std::size_t l = 0; l < labels; ++l) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores(a, l) < scores(b, l); });
    // Average 1-based ranks over runs of tied scores.
    for (std::size_t i = 0; i < m;) {
      std::size_t j = i;
      while (j + 1 < m && scores(order[j + 1], l) == scores(order[i], l)) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
      i = j + 1;
    }
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (targets(i, l) > 0.5) {
        pos += 1.0;
        rank_sum += rank[i];
      }
    }
    const double neg = static_cast<double>(m) - pos;
    if (pos == 0.0 || neg == 0.0) continue;
    total += (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
    ++valid;
  }
  if (valid == 0) throw ContractError("AUC-ROC needs a label column with both classes");
  return total / static_cast<double>(valid);
}

namespace {

std::map<std::size_t, std::vector<std::size_t>> ByClass(std::span<const std::size_t> labels) {
  std::map<std::size_t, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i]].push_back(i);
  return by;
}

}  // namespace

Split FewShotSplit(std::span<const std::size_t> labels, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Split split;
  std::vector<std::size_t> rest;
  for (auto& [cls, members] : ByClass(labels)) {
    if (members.size() < k) {
      throw ContractError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                          " instances, fewer than k = " + std::to_string(k));
    }
    std::shuffle(members.begin(), members.end(), rng);
    split.train.insert(split.train.end(), members.begin(), members.begin() + k);
    rest.insert(rest.end(), members.begin() + k, members.end());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  const std::size_t half = rest.size() / 2;
  split.val.assign(rest.begin(), rest.begin() + half);
  split.test.assign(rest.begin() + half, rest.end());
  return split;
}

Split StratifiedSplit(std::span<const std::size_t> labels, double train_fraction,
                      double val_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [cls, members] : ByClass(labels)) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::round(train_fraction * n)));
    const std::size_t n_val = std::min(members.size() - std::min(members.size(), n_train),
                                       static_cast<std::size_t>(std::round(val_fraction * n)));
    split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
    split.val.insert(split.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    split.test.insert(split.test.end(), members.begin() + n_train + n_val, members.end());
  }
  return split;
}

Split RandomSplit(std::size_t count, double train_fraction, double val_fraction,
                  std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(count);
  const std::size_t n_train = std::min(count, std::max<std::size_t>(1, static_cast<std::size_t>(std::round(train_fraction * n))));
  const std::size_t n_val = std::min(count - n_train, static_cast<std::size_t>(std::round(val_fraction * n)));
  Split split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

Split MakeSplit(const InstanceSet& set, const TaskSpec& task, std::uint64_t seed) {
  if (set.multilabel) {
    if (task.few_shot_k > 0) throw ConfigError("few-shot splits need single-label tasks");
    return RandomSplit(set.size(), task.train_fraction, task.val_fraction, seed);
  }
  if (task.few_shot_k > 0) return FewShotSplit(set.labels, task.few_shot_k, seed);
  return StratifiedSplit(set.labels, task.train_fraction, task.val_fraction, seed);
}

namespace {

Tensor Rows(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), t.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(t.row(rows[i]).begin(), t.row(rows[i]).end(), out.row(i).begin());
  return out;
}

std::vector<std::size_t> Pick(std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

PrototypeHead FitHead(const InstanceSet& set, std::span<const std::size_t> train) {
  const Tensor emb = Rows(set.embeddings, train);
  if (set.multilabel) return FitMultilabelPrototypes(emb, Rows(set.multilabel_targets, train));
  return FitPrototypes(emb, Pick(set.labels, train), set.class_count());
}

// Cross-entropy of the combined prediction, differentiable in the linear
// head only.
Var CombinedLoss(Tape& tape, const InstanceSet& set, std::span<const std::size_t> train,
                 const PrototypeHead& proto, Var weight, Var bias) {
  const std::size_t m = train.size(), classes = set.class_count();
  const Tensor emb = Rows(set.embeddings, train);
  Tensor proto_probs({m, classes});
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = set.multilabel ? MultilabelPrototypeProbabilities(emb.row(i), proto)
                                  : PrototypeProbabilities(emb.row(i), proto);
    std::copy(p.begin(), p.end(), proto_probs.row(i).begin());
  }
  Var logits = ad::AddRowVector(ad::MatMul(tape.Constant(emb), weight), bias);
  Var pp = tape.Constant(std::move(proto_probs));
  if (!set.multilabel) {
    Tensor onehot({m, classes});
    for (std::size_t i = 0; i < m; ++i) onehot(i, set.labels[train[i]]) = 1.0;
    Var combined = ad::Scale(ad::Add(pp, ad::SoftmaxRows(logits)), 0.5);
    Var picked = ad::SumRows(ad::Mul(combined, tape.Constant(std::move(onehot))));
    return ad::Scale(ad::Sum(ad::Log(picked)), -1.0 / static_cast<double>(m));
  }
  constexpr double kClamp = 1e-12;
  Tensor y = Rows(set.multilabel_targets, train);
  Tensor not_y = y;
  for (double& v : not_y.data()) v = 1.0 - v;
  Var combined = ad::Affine(ad::Scale(ad::Add(pp, ad::Sigmoid(logits)), 0.5), 1.0 - 2 * kClamp, kClamp);
  Var ll = ad::Add(ad::Mul(tape.Constant(std::move(y)), ad::Log(combined)),
                   ad::Mul(tape.Constant(std::move(not_y)), ad::Log(ad::Affine(combined, -1.0, 1.0))));
  return ad::Scale(ad::Sum(ll), -1.0 / static_cast<double>(m * classes));
}

}  // namespace

double Score(const InstanceSet& set, std::span<const std::size_t> rows, const PrototypeHead& proto,
             const LinearHead& lin, Metric metric) {
  const Tensor probs = PredictBatch(Rows(set.embeddings, rows), proto, lin, set.multilabel);
  if (metric == Metric::kAucRoc) return AucRoc(probs, Rows(set.multilabel_targets, rows));
  return Accuracy(probs, Pick(set.labels, rows));
}

FinetuneResult Finetune(const InstanceSet& set, const Split& split, const FinetuneConfig& config) {
  if (split.train.empty()) throw ContractError("fine-tuning needs a non-empty training split");
  const std::size_t dh = set.embeddings.cols(), classes = set.class_count();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> init(0.0, 0.02);
  FinetuneResult result;
  result.linear.weight = Tensor({dh, classes});
  for (double& v : result.linear.weight.data()) v = init(rng);
  result.linear.bias = Tensor({classes});

  const Metric metric = set.multilabel ? Metric::kAucRoc : Metric::kAccuracy;
  OptimizerConfig opt;
  opt.kind = config.optimizer;
  opt.lr = config.lr;
  Optimizer optimizer(opt);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    result.proto = FitHead(set, split.train);
    Tape tape;
    Var w = tape.Parameter(result.linear.weight);
    Var b = tape.Parameter(result.linear.bias);
    Var loss = CombinedLoss(tape, set, split.train, result.proto, w, b);
    tape.Backward(loss);
    ParamSet params{{"bias", result.linear.bias}, {"weight", result.linear.weight}};
    optimizer.Step(params, ParamSet{{"bias", tape.Gradient(b)}, {"weight", tape.Gradient(w)}});
    result.linear.weight = std::move(params.at("weight"));
    result.linear.bias = std::move(params.at("bias"));
    result.train_trace.push_back(loss.value().item());
    if (!split.val.empty()) {
      double s = 0.0;
      try {
        s = Score(set, split.val, result.proto, result.linear, metric);
      } catch (const ContractError&) {
        s = 0.0;  // validation rows carry a single class: AUC undefined
      }
      result.val_trace.push_back(s);
    }
  }
  if (config.epochs == 0) result.proto = FitHead(set, split.train);
  return result;
}

ClientEvaluation EvaluateClient(std::size_t client_id, const std::vector<TextAttributedGraph>& data,
                                const ParamSet& backbone, const TaskSpec& task,
                                const FinetuneConfig& config) {
  const InstanceSet set = CollectInstances(data, backbone, task.level);
  task.Validate(set.multilabel);
  const Split split = MakeSplit(set, task, config.seed);
  ClientEvaluation eval;
  eval.client_id = client_id;
  if (split.test.empty()) throw ContractError("client " + std::to_string(client_id) + " has an empty test split");
  FinetuneConfig chosen = config;
  if (config.grid_search) {
    double best = -1.0;
    for (double lr : config.lr_grid) {
      FinetuneConfig trial = config;
      trial.lr = lr;
      const auto r = Finetune(set, split, trial);
      const double v = r.val_trace.empty() ? 0.0 : r.val_trace.back();
      if (v > best) {
        best = v;
        chosen.lr = lr;
      }
    }
  }
  eval.heads = Finetune(set, split, chosen);
  eval.score = Score(set, split.test, eval.heads.proto, eval.heads.linear, task.metric);
  return eval;
}

}  // namespace fedbook
