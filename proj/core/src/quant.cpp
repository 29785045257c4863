#include "ocsq/quant.hpp"

#include <algorithm>
#include <cmath>

#include "ocsq/error.hpp"

namespace ocsq {

QuantGrid make_grid(int bits, double clip) {
  if (bits < 2 || bits > kMaxGridBits) throw Error("grid bitwidth must lie in [2, 30], got " + std::to_string(bits));
  if (!(clip > 0.0) || !std::isfinite(clip)) throw Error("grid clip threshold must be positive");
  QuantGrid g;
  g.bits = bits;
  g.clip = clip;
  g.step = clip / static_cast<double>(g.max_level());
  return g;
}

std::int64_t quantize_level(double x, const QuantGrid& g) {
  const double level = std::floor(x / g.step + 0.5);
  const auto limit = static_cast<double>(g.max_level());
  return static_cast<std::int64_t>(std::clamp(level, -limit, limit));
}

Tensor quantize(const Tensor& t, const QuantGrid& g) {
  std::vector<double> out;
  out.reserve(t.size());
  for (double v : t.values()) out.push_back(quantize_value(v, g));
  return Tensor(t.shape(), std::move(out));
}

double quant_mse(const Tensor& t, const QuantGrid& g) {
  if (t.empty()) throw Error("empty input");
  double acc = 0.0;
  for (double v : t.values()) {
    const double e = v - quantize_value(v, g);
    acc += e * e;
  }
  return acc / static_cast<double>(t.size());
}

}  // namespace ocsq
