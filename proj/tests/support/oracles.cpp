#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ocsq::testing {

double ref_quantize(double x, int bits, double clip) {
  const double levels = std::pow(2.0, bits - 1) - 1.0;
  const double step = clip / levels;
  double k = std::floor(x / step + 0.5);
  k = std::clamp(k, -levels, levels);
  return k * step;
}

double ref_mse_threshold(const Histogram& h, int bits, int candidates, double* objective) {
  const std::size_t n = h.counts.size();
  const double top = h.edges[n];
  double best_t = 0.0, best = INFINITY;
  for (int j = 1; j <= candidates; ++j) {
    const double t = j == candidates ? top : top * j / candidates;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = 0.5 * (h.edges[i] + h.edges[i + 1]);
      const double e = x - ref_quantize(x, bits, t);
      acc += h.counts[i] * e * e;
    }
    acc /= static_cast<double>(n);
    if (acc <= best) {
      best = acc;
      best_t = t;
    }
  }
  if (objective) *objective = best;
  return best_t;
}

namespace {

double density(bool laplacian, double param, double x) {
  if (laplacian) return std::exp(-std::abs(x) / param) / (2.0 * param);
  return std::exp(-0.5 * x * x / (param * param)) / (param * std::sqrt(2.0 * std::numbers::pi));
}

// Composite Simpson rule with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double hstep = (b - a) / n;
  double s = f(a) + f(b);
  for (int k = 1; k < n; ++k) s += f(a + k * hstep) * (k % 2 ? 4.0 : 2.0);
  return s * hstep / 3.0;
}

}  // namespace

double ref_expected_error(bool laplacian, double param, double threshold, int bits) {
  const double step = threshold / (std::pow(2.0, bits - 1) - 1.0);
  auto f = [&](double x) { return density(laplacian, param, x); };
  const double inside = 2.0 * simpson(f, 0.0, threshold, 4000);
  const double tail = 2.0 * simpson([&](double x) { return f(x) * (x - threshold) * (x - threshold); }, threshold,
                                    threshold + 60.0 * param, 20000);
  return inside * step * step / 12.0 + tail;
}

double ref_kl(const Histogram& h, std::size_t i, int bits) {
  const std::size_t levels = (std::size_t{1} << (bits - 1)) - 1;
  std::vector<double> p(h.counts.begin(), h.counts.begin() + static_cast<std::ptrdiff_t>(i));
  double tail = 0.0;
  for (std::size_t j = i; j < h.counts.size(); ++j) tail += h.counts[j];
  p[i - 1] += tail;

  // Merge into `levels` groups (the last absorbs the remainder), then spread
  // each group's mass evenly over its occupied bins.
  std::vector<double> q(i, 0.0);
  const std::size_t width = i / levels;
  for (std::size_t g = 0; g < levels; ++g) {
    const std::size_t lo = g * width, hi = (g == levels - 1) ? i : (g + 1) * width;
    double mass = 0.0;
    std::size_t occupied = 0;
    for (std::size_t j = lo; j < hi; ++j) {
      mass += p[j];
      occupied += p[j] > 0.0;
    }
    for (std::size_t j = lo; j < hi; ++j) q[j] = p[j] > 0.0 ? mass / static_cast<double>(occupied) : 0.0;
  }
  double sp = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < i; ++j) {
    sp += p[j];
    sq += q[j];
  }
  for (std::size_t j = 0; j < i; ++j) {
    p[j] /= sp;
    q[j] /= sq;
  }
  std::size_t holes = 0, filled = 0;
  for (std::size_t j = 0; j < i; ++j) {
    holes += (q[j] == 0.0 && p[j] > 0.0);
    filled += q[j] > 0.0;
  }
  if (holes > 0 && filled > 0) {
    const double eps = 1e-9;
    const double take = eps * static_cast<double>(holes) / static_cast<double>(filled);
    for (std::size_t j = 0; j < i; ++j) {
      if (q[j] > 0.0) {
        q[j] -= take;
      } else if (p[j] > 0.0) {
        q[j] = eps;
      }
    }
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < i; ++j) {
    if (p[j] > 0.0) kl += p[j] * std::log(p[j] / q[j]);
  }
  return std::max(kl, 0.0);
}

double ref_kl_threshold(const Histogram& h, int bits, double* objective) {
  double best = INFINITY, best_t = 0.0;
  for (std::size_t i = std::size_t{1} << bits; i <= h.counts.size(); ++i) {
    const double kl = ref_kl(h, i, bits);
    if (kl <= best) {
      best = kl;
      best_t = h.edges[i];
    }
  }
  if (objective) *objective = best;
  return best_t;
}

}  // namespace ocsq::testing
