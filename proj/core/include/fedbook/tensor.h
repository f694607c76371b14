#ifndef FEDBOOK_TENSOR_H_
#define FEDBOOK_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fedbook {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Dense row-major double tensor with value semantics.
//
// Construction from caller data rejects NaN/Inf and a data length that does
// not match the shape. Elementwise accessors are unchecked.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Filled(Shape shape, double value);
  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  // Nested-list convenience for small literals in tests and fixtures.
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 views. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double item() const;

  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain (non-differentiable) kernels shared by the autodiff ops and by code
// that works on raw values.
Tensor MatMulValue(const Tensor& a, const Tensor& b);
Tensor TransposeValue(const Tensor& a);

// Cosine similarity of two equal-length vectors. Zero-norm input gives 0.
double Cosine(std::span<const double> a, std::span<const double> b);
double SquaredDistance(std::span<const double> a, std::span<const double> b);
double Dot(std::span<const double> a, std::span<const double> b);

double MaxAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace fedbook

#endif  // FEDBOOK_TENSOR_H_
