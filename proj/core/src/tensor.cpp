#include "ocsq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ocsq/error.hpp"

namespace ocsq {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() && data_.empty()) return;
  for (auto d : shape_) {
    if (d == 0) throw Error("tensor shape " + shape_to_string(shape_) + " has a zero dimension");
  }
  if (shape_numel(shape_) != data_.size()) {
    throw Error("tensor shape " + shape_to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                " elements");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw Error("tensor contains a non-finite value");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  if (values.empty()) return {};
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw Error("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

double max_abs(std::span<const double> values) {
  if (values.empty()) throw Error("empty input");
  double m = 0.0;
  for (double v : values) m = std::max(m, std::fabs(v));
  return m;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error("empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw Error("percentile fraction must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw Error("cannot stack an empty batch");
  const Shape& inner = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& t : items) {
    if (t.shape() != inner) throw Error("stack: mismatched shapes " + shape_to_string(inner) + " and " +
                                        shape_to_string(t.shape()));
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor unstack_one(const Tensor& batch, std::size_t i) {
  if (batch.rank() < 2) throw Error("unstack: tensor needs a leading batch axis");
  if (i >= batch.dim(0)) throw Error("unstack: index out of range");
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const auto n = shape_numel(inner);
  auto v = batch.values().subspan(i * n, n);
  return Tensor(std::move(inner), std::vector<double>(v.begin(), v.end()));
}

}  // namespace ocsq
