#pragma once

#include <cstdint>

#include "ocsq/tensor.hpp"

namespace ocsq {

/// Symmetric sign-magnitude fixed-point grid.
///
/// A k-bit grid has 2^k - 1 levels: the integers -(2^(k-1)-1) ... 2^(k-1)-1
/// scaled by `step`, so the outermost level sits at `clip`.
struct QuantGrid {
  int bits = 0;
  double clip = 0.0;
  double step = 0.0;

  std::int64_t max_level() const noexcept { return (std::int64_t{1} << (bits - 1)) - 1; }
  std::int64_t level_count() const noexcept { return 2 * max_level() + 1; }

  friend bool operator==(const QuantGrid&, const QuantGrid&) = default;
};

inline constexpr int kMaxGridBits = 30;

QuantGrid make_grid(int bits, double clip);

/// Integer grid level of x: clamp(floor(x/step + 1/2), -L, L).
std::int64_t quantize_level(double x, const QuantGrid& g);

/// Fake-quantized value of x (level * step). Halves round up (floor(x/step + 1/2)).
inline double quantize_value(double x, const QuantGrid& g) {
  return static_cast<double>(quantize_level(x, g)) * g.step;
}

Tensor quantize(const Tensor& t, const QuantGrid& g);

/// Mean squared error between t and quantize(t, g).
double quant_mse(const Tensor& t, const QuantGrid& g);

}  // namespace ocsq
