#ifndef FEDBOOK_TESTS_TEST_UTIL_H_
#define FEDBOOK_TESTS_TEST_UTIL_H_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fedbook/autodiff.h"
#include "fedbook/graph.h"
#include "fedbook/tensor.h"
#include "oracle/oracles.h"

namespace fedbook::testing {

inline Tensor RandomTensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Entries with magnitude in [0.1, 2] and random sign.
inline Tensor MagnitudeTensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (double& v : t.data()) v = u(rng) * (rng() & 1 ? 1.0 : -1.0);
  return t;
}

inline Tensor PositiveTensor(Shape shape, std::mt19937_64& rng) {
  return RandomTensor(std::move(shape), rng, 0.1, 2.0);
}

// Builds an op output from parameter vars; the harness reduces it with a
// fixed random projection so every output entry feeds the gradient.
using OpBuilder = std::function<Var(std::vector<Var>&)>;

// Max relative error between tape gradients and central differences.
inline double OpGradientError(const OpBuilder& build, const std::vector<Tensor>& inputs,
                              std::uint64_t seed = 1) {
  Tensor projection;
  auto evaluate = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.Parameter(x));
    Var out = build(vars);
    if (projection.empty()) {
      std::mt19937_64 rng(seed);
      projection = RandomTensor(out.shape(), rng);
    }
    Var loss = ad::Sum(ad::Mul(out, tape.Constant(projection)));
    if (grads) {
      tape.Backward(loss);
      for (const auto& v : vars) grads->push_back(tape.Gradient(v));
    }
    return loss.value().item();
  };
  std::vector<Tensor> grads;
  evaluate(inputs, &grads);
  oracle::Flat flat, analytic;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    flat.insert(flat.end(), inputs[i].data().begin(), inputs[i].data().end());
    analytic.insert(analytic.end(), grads[i].data().begin(), grads[i].data().end());
  }
  auto f = [&](const oracle::Flat& x) {
    std::vector<Tensor> xs = inputs;
    std::size_t k = 0;
    for (auto& t : xs)
      for (double& v : t.data()) v = x[k++];
    return evaluate(xs, nullptr);
  };
  return oracle::MaxRelativeError(analytic, oracle::CentralDifferences(f, flat, 1e-5),
                                  oracle::kRelativeErrorFloor);
}

// Path 0-1-...-(n-1) with d-dimensional features drawn from `rng`.
inline TextAttributedGraph PathGraph(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  TextAttributedGraph g;
  g.node_count = n;
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1});
  g.node_features = RandomTensor({n, d}, rng);
  g.node_labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) g.node_labels[i] = static_cast<std::int64_t>(i % 2);
  return g;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fedbook_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fedbook::testing

#endif  // FEDBOOK_TESTS_TEST_UTIL_H_
