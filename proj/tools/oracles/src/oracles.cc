#include "oracle/oracles.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

Tensor TripleLoopMatMul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) throw std::invalid_argument("inner dimensions differ");
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
      out[i * m + j] = s;
    }
  return Tensor({n, m}, out);
}

std::vector<std::size_t> BruteForceNearest(const Tensor& z, const Tensor& tokens,
                                           std::size_t head) {
  const std::size_t n_tok = tokens.shape()[1], d = tokens.shape()[2];
  const std::size_t rows = z.shape()[0];
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> dist(n_tok);
    for (std::size_t j = 0; j < n_tok; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = z[r * d + c] - tokens[(head * n_tok + j) * d + c];
        s += diff * diff;
      }
      dist[j] = s;
    }
    double best = dist[0];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < n_tok; ++j) {
      if (dist[j] < best) {
        best = dist[j];
        arg = j;
      }
    }
    out[r] = arg;
  }
  return out;
}

double LoopCosine(const double* a, const double* b, std::size_t n) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<Flat> LoopTokenSimilarity(const Tensor& ta, const Tensor& tb, std::size_t head) {
  const std::size_t n = ta.shape()[1], d = ta.shape()[2];
  std::vector<Flat> s(n, Flat(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s[i][j] = LoopCosine(&ta.data()[(head * n + i) * d], &tb.data()[(head * n + j) * d], d);
  return s;
}

std::vector<std::vector<bool>> LoopMask(const Counts& freq_a, const Counts& freq_b) {
  std::vector<std::vector<bool>> keep(freq_a.size(), std::vector<bool>(freq_b.size()));
  for (std::size_t i = 0; i < freq_a.size(); ++i)
    for (std::size_t j = 0; j < freq_b.size(); ++j) keep[i][j] = freq_b[j] >= freq_a[i];
  return keep;
}

std::vector<Tensor> MaterializedCodebookUpdate(const std::vector<Tensor>& tokens,
                                               const std::vector<Counts>& freqs, double lambda) {
  const std::size_t k = tokens.size();
  const std::size_t heads = tokens[0].shape()[0], n = tokens[0].shape()[1],
                    d = tokens[0].shape()[2];
  std::vector<Tensor> out = tokens;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t h = 0; h < heads; ++h) {
      Counts fa(freqs[a].begin() + h * n, freqs[a].begin() + (h + 1) * n);
      for (std::size_t i = 0; i < n; ++i) {
        // weight[b][j], unnormalized then normalized.
        std::vector<Flat> weight(k, Flat(n, 0.0));
        double total = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
          Counts fb(freqs[b].begin() + h * n, freqs[b].begin() + (h + 1) * n);
          const auto s = LoopTokenSimilarity(tokens[a], tokens[b], h);
          const auto keep = LoopMask(fa, fb);
          for (std::size_t j = 0; j < n; ++j) {
            weight[b][j] = keep[i][j] ? std::exp(s[i][j]) : 0.0;
            total += weight[b][j];
          }
        }
        for (auto& row : weight)
          for (double& w : row) w /= total;
        for (std::size_t c = 0; c < d; ++c) {
          double mixed = 0.0;
          for (std::size_t b = 0; b < k; ++b)
            for (std::size_t j = 0; j < n; ++j)
              mixed += weight[b][j] * tokens[b][(h * n + j) * d + c];
          out[a][(h * n + i) * d + c] =
              lambda * tokens[a][(h * n + i) * d + c] + (1.0 - lambda) * mixed;
        }
      }
    }
  }
  return out;
}

double LoopClientSimilarity(const Tensor& ta, const Tensor& tb) {
  const std::size_t heads = ta.shape()[0], n = ta.shape()[1];
  double total = 0.0;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto s = LoopTokenSimilarity(ta, tb, h);
    double per_head = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = s[i][0];
      for (std::size_t j = 1; j < n; ++j)
        if (s[i][j] > best) best = s[i][j];
      per_head += best;
    }
    total += per_head / static_cast<double>(n);
  }
  return total / static_cast<double>(heads);
}

Flat LoopSoftmax(const Flat& logits) {
  Flat w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits[i]);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

Flat LoopWeightedMean(const std::vector<Flat>& params, const Flat& weights) {
  Flat out(params[0].size(), 0.0);
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += weights[b] * params[b][p];
  return out;
}

std::vector<Flat> LoopPersonalized(const std::vector<Flat>& params,
                                   const std::vector<Flat>& delta) {
  std::vector<Flat> out;
  for (const Flat& row : delta) out.push_back(LoopWeightedMean(params, LoopSoftmax(row)));
  return out;
}

Flat LoopDistinctiveness(const std::vector<Flat>& delta) {
  Flat out;
  for (const Flat& row : delta) {
    double s = 0.0;
    for (double v : row) s += v;
    out.push_back(1.0 - s / static_cast<double>(row.size()));
  }
  return out;
}

Flat LoopGlobal(const std::vector<Flat>& params, const Flat& nabla) {
  return LoopWeightedMean(params, LoopSoftmax(nabla));
}

Flat LoopFedAvg(const std::vector<Flat>& params, const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  Flat w;
  for (auto c : counts) w.push_back(static_cast<double>(c) / total);
  return LoopWeightedMean(params, w);
}

double LoopFeatureLoss(const Tensor& x, const Tensor& x_hat, double gamma) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += std::pow(1.0 - LoopCosine(&x.data()[i * d], &x_hat.data()[i * d], d), gamma);
  return s / static_cast<double>(n);
}

double LoopTopologyLoss(const Tensor& adjacency, const Tensor& x_hat) {
  const std::size_t n = x_hat.shape()[0], d = x_hat.shape()[1];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double logit = 0.0;
      for (std::size_t c = 0; c < d; ++c) logit += x_hat[i * d + c] * x_hat[j * d + c];
      const double diff = adjacency[i * n + j] - 1.0 / (1.0 + std::exp(-logit));
      s += diff * diff;
    }
  return s;
}

double LoopQuantizationGap(const Tensor& z, const Tensor& zq) {
  const std::size_t n = z.shape()[0], d = z.shape()[1];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = z[i * d + c] - zq[i * d + c];
      s += diff * diff;
    }
  return s / static_cast<double>(n);
}

namespace {

// out = h W (+=) with explicit loops; h is rows x k, W is k x m.
void AccumulateProduct(const std::vector<double>& h, std::size_t rows, std::size_t k,
                       const Tensor& w, std::vector<double>& out) {
  const std::size_t m = w.shape()[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += h[r * k + t] * w[t * m + c];
      out[r * m + c] += s;
    }
}

std::vector<double> LoopLayer(const LoopGraph& g, const std::vector<double>& h, std::size_t k,
                              const Tensor& ws, const Tensor& wn, const Tensor& we,
                              const Tensor& b, bool relu) {
  const std::size_t n = g.node_count, m = ws.shape()[1];
  std::vector<double> self(n * m, 0.0), hn(n * m, 0.0), ew;
  AccumulateProduct(h, n, k, ws, self);
  AccumulateProduct(h, n, k, wn, hn);  // h_u Wn for every u
  const bool with_edges = !g.edge_x.empty() && !we.empty();
  if (with_edges) {
    const std::size_t de = g.edge_x.shape()[1];
    ew.assign(g.edges.size() * m, 0.0);
    std::vector<double> ex(g.edge_x.data().begin(), g.edge_x.data().end());
    AccumulateProduct(ex, g.edges.size(), de, we, ew);
  }
  // Incidences: (node, neighbor, edge). A self loop appears once.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> inc(n);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    inc[v].push_back({u, e});
    if (u != v) inc[u].push_back({v, e});
  }
  std::vector<double> out(n * m);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < m; ++c) {
      double neigh = 0.0;
      for (const auto& [u, e] : inc[v]) {
        neigh += hn[u * m + c];
        if (with_edges) neigh += ew[e * m + c];
      }
      if (!inc[v].empty()) neigh /= static_cast<double>(inc[v].size());
      double val = self[v * m + c] + neigh + b[c];
      if (relu && val < 0.0) val = 0.0;
      out[v * m + c] = val;
    }
  }
  return out;
}

}  // namespace

Tensor LoopEncode(const LoopGraph& g, const LoopModel& m, const std::vector<std::size_t>& masked) {
  const std::size_t n = g.node_count, d = g.x.shape()[1], dh = m.w1_self.shape()[1];
  std::vector<double> h(g.x.data().begin(), g.x.data().end());
  for (std::size_t r : masked)
    for (std::size_t c = 0; c < d; ++c) h[r * d + c] = m.mask[c];
  const auto h1 = LoopLayer(g, h, d, m.w1_self, m.w1_neigh, m.w1_edge, m.b1, true);
  const auto h2 = LoopLayer(g, h1, dh, m.w2_self, m.w2_neigh, m.w2_edge, m.b2, false);
  return Tensor({n, dh}, h2);
}

LoopLoss LoopPretrainLoss(const LoopGraph& g, const LoopModel& m,
                          const std::vector<std::size_t>& masked, double gamma,
                          const FrozenQuantization* frozen) {
  const std::size_t n = g.node_count;
  const std::size_t heads = m.tokens.shape()[0], n_tok = m.tokens.shape()[1],
                    dh = m.tokens.shape()[2];
  const Tensor z = LoopEncode(g, m, masked);

  LoopLoss loss;
  if (frozen) {
    loss.frozen.indices = frozen->indices;
  } else {
    for (std::size_t h = 0; h < heads; ++h)
      loss.frozen.indices.push_back(BruteForceNearest(z, m.tokens, h));
  }
  // Concatenated token rows, then the projection.
  Tensor concat({n, heads * dh});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t c = 0; c < dh; ++c)
        concat[r * heads * dh + h * dh + c] =
            m.tokens[(h * n_tok + loss.frozen.indices[h][r]) * dh + c];
  const Tensor zq = TripleLoopMatMul(concat, m.projection);

  const Tensor& sg_z = frozen ? frozen->z : z;
  const Tensor& sg_zq = frozen ? frozen->zq : zq;
  Tensor decoder_in({n, dh});
  for (std::size_t i = 0; i < n * dh; ++i) decoder_in[i] = z[i] + (sg_zq[i] - sg_z[i]);
  const Tensor x_hat = TripleLoopMatMul(decoder_in, m.decoder);

  Tensor adjacency({n, n});
  for (const auto& [u, v] : g.edges) {
    adjacency[u * n + v] = 1.0;
    adjacency[v * n + u] = 1.0;
  }
  loss.feature = LoopFeatureLoss(g.x, x_hat, gamma);
  loss.topology = LoopTopologyLoss(adjacency, x_hat);
  loss.codebook = LoopQuantizationGap(sg_z, zq);
  loss.commitment = LoopQuantizationGap(z, sg_zq);
  loss.total = loss.feature + loss.topology + loss.codebook + loss.commitment;
  loss.frozen.z = z;
  loss.frozen.zq = zq;
  return loss;
}

Flat LoopCombinedPrediction(const Flat& z, const Tensor& prototypes, const Tensor& weight,
                            const Tensor& bias) {
  const std::size_t classes = prototypes.shape()[0], d = z.size();
  Flat neg_dist(classes), logits(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      const double diff = z[t] - prototypes[c * d + t];
      s += diff * diff;
    }
    neg_dist[c] = -s;
    double l = bias[c];
    for (std::size_t t = 0; t < d; ++t) l += z[t] * weight[t * classes + c];
    logits[c] = l;
  }
  const Flat p = LoopSoftmax(neg_dist), q = LoopSoftmax(logits);
  Flat out(classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    out[c] = 0.5 * (p[c] + q[c]);
    total += out[c];
  }
  for (double& v : out) v /= total;
  return out;
}

double CountingAccuracy(const Tensor& probs, const std::vector<std::size_t>& labels) {
  const std::size_t classes = probs.shape()[1];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (probs[i * classes + c] > probs[i * classes + arg]) arg = c;
    if (arg == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double PairCountingAuc(const Tensor& scores, const Tensor& targets) {
  const std::size_t m = scores.shape()[0], cols = scores.shape()[1];
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t l = 0; l < cols; ++l) {
    double pairs = 0.0, wins = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      if (targets[p * cols + l] <= 0.5) continue;
      for (std::size_t q = 0; q < m; ++q) {
        if (targets[q * cols + l] > 0.5) continue;
        pairs += 1.0;
        const double sp = scores[p * cols + l], sq = scores[q * cols + l];
        if (sp > sq) wins += 1.0;
        else if (sp == sq) wins += 0.5;
      }
    }
    if (pairs == 0.0) continue;
    total += wins / pairs;
    ++valid;
  }
  return valid == 0 ? -1.0 : total / static_cast<double>(valid);
}

Flat CentralDifferences(const std::function<double(const Flat&)>& f, const Flat& x, double eps) {
  Flat grad(x.size());
  Flat probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double MaxRelativeError(const Flat& analytic, const Flat& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient sizes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
