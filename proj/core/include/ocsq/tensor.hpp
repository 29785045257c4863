#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ocsq {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of 64-bit reals.
///
/// Immutable once constructed: every operation in the toolkit builds a new
/// tensor. The constructor enforces product(shape) == size and rejects
/// non-finite values. A default-constructed tensor is empty (no shape).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  /// 1-D tensor over `values`; empty input yields an empty tensor.
  static Tensor vector(std::vector<double> values);
  static Tensor zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Largest absolute value. Throws Error("empty input") on an empty input.
double max_abs(std::span<const double> values);
inline double max_abs(const Tensor& t) { return max_abs(t.values()); }

/// Value below which a fraction `p` of the elements lie, linearly
/// interpolated between order statistics (p = 0 is the min, p = 1 the max).
double percentile(std::span<const double> values, double p);
inline double percentile(const Tensor& t, double p) { return percentile(t.values(), p); }

/// Stacks equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

/// Slice `i` along the leading axis.
Tensor unstack_one(const Tensor& batch, std::size_t i);

}  // namespace ocsq
