#ifndef FEDBOOK_OPTIMIZER_H_
#define FEDBOOK_OPTIMIZER_H_

#include <cstdint>
#include <string>

#include "fedbook/params.h"

namespace fedbook {

enum class OptimizerKind { kAdam, kSgd };

std::string ToString(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Adam (bias-corrected) or plain gradient descent over a ParamSet. Moment
// buffers are created on the first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void Step(ParamSet& params, const ParamSet& grads);
  void Reset();
  std::uint64_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  ParamSet first_moment_;
  ParamSet second_moment_;
};

}  // namespace fedbook

#endif  // FEDBOOK_OPTIMIZER_H_
