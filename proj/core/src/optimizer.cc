#include "fedbook/optimizer.h"

#include <cmath>

#include "fedbook/errors.h"

namespace fedbook {

std::string ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind ParseOptimizerKind(const std::string& text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + text + "'");
}

void Optimizer::Step(ParamSet& params, const ParamSet& grads) {
  ++steps_;
  if (config_.kind == OptimizerKind::kSgd) {
    for (auto& [name, p] : params) {
      const Tensor& g = grads.at(name);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config_.lr * g[i];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = first_moment_.try_emplace(name, Tensor::Zeros(p.shape()));
    auto [v_it, v_new] = second_moment_.try_emplace(name, Tensor::Zeros(p.shape()));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Optimizer::Reset() {
  steps_ = 0;
  first_moment_.clear();
  second_moment_.clear();
}

}  // namespace fedbook
