#ifndef FEDBOOK_AUTODIFF_H_
#define FEDBOOK_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedbook/tensor.h"

namespace fedbook {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning Tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered trace of operations for one forward pass. Backward walks the trace
// once in reverse creation order, which is a reverse topological order since
// every node is created after its inputs.
//
// Not thread-safe; one tape per training step.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // Leaf that receives a gradient on Backward().
  Var Parameter(Tensor value);

  // Records a derived node. `backward` reads this node's gradient and
  // accumulates into the inputs' gradients. When no input requires a
  // gradient the node is recorded as a constant and `backward` is dropped.
  Var Record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Runs reverse accumulation from a scalar loss. Gradients of earlier
  // Backward() calls are cleared first.
  void Backward(Var loss);

  // Gradient of a node after Backward(); zeros when nothing reached it.
  Tensor Gradient(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated lazily. For use inside BackwardFn.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. Every function records one node on the tape of
// its (first) argument. Shape mismatches throw DimensionError.
namespace ad {

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double c);
// c * a + b elementwise, with scalars c and b.
Var Affine(Var a, double c, double b);
// Adds a length-m vector to every row of an n x m matrix.
Var AddRowVector(Var a, Var row);
Var MatMul(Var a, Var b);
Var Transpose(Var a);
Var Square(Var a);
// a^p elementwise for a >= 0. The derivative at a == 0 is taken as 0 when
// p > 1, 1 when p == 1, and 0 when p < 1.
Var Pow(Var a, double p);
Var Log(Var a);
Var Sigmoid(Var a);
Var Relu(Var a);
Var SoftmaxRows(Var a);
// Per-row L2 norm, n x m -> n x 1.
Var RowNorm(Var a);
// Per-row cosine similarity of two n x m matrices, n x 1. A zero row gives 0
// and passes no gradient.
Var CosineRows(Var a, Var b);
Var Sum(Var a);
Var Mean(Var a);
// n x m -> n x 1.
Var SumRows(Var a);
// Replaces the listed rows of an n x m matrix by the length-m `fill` vector.
Var MaskRows(Var a, std::span<const std::size_t> rows, Var fill);
// Rows `indices` of head `head` from an H x N x m table, giving len x m.
Var GatherHeadRows(Var table, std::size_t head,
                   std::span<const std::size_t> indices);
// Column-wise concatenation of equal-height matrices.
Var ConcatCols(std::span<const Var> parts);
// Forward value equals `a`; no gradient flows back to `a`.
Var StopGradient(Var a);
// Forward value equals `zq`; the gradient is passed to `z` unchanged and
// nothing reaches `zq`.
Var StraightThrough(Var z, Var zq);

}  // namespace ad
}  // namespace fedbook

#endif  // FEDBOOK_AUTODIFF_H_
