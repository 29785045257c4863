#include "ocsq/clip.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "ocsq/error.hpp"

namespace ocsq {

std::string_view to_string(ClipMethod m) {
  switch (m) {
    case ClipMethod::none: return "none";
    case ClipMethod::mse: return "mse";
    case ClipMethod::aciq: return "aciq";
    case ClipMethod::kl: return "kl";
  }
  return "none";
}

std::string_view to_string(DistributionFit f) {
  return f == DistributionFit::gaussian ? "gaussian" : "laplacian";
}

ClipMethod parse_clip_method(std::string_view name) {
  if (name == "none") return ClipMethod::none;
  if (name == "mse") return ClipMethod::mse;
  if (name == "aciq") return ClipMethod::aciq;
  if (name == "kl") return ClipMethod::kl;
  throw UsageError("unknown clip method '" + std::string(name) + "' (expected none|mse|aciq|kl)");
}

Histogram build_histogram(std::span<const double> values, int bins) {
  if (values.empty()) throw Error("empty input");
  if (bins < 2) throw Error("histogram needs at least 2 bins");
  const double top = max_abs(values);
  if (top == 0.0) throw Error("degenerate distribution");

  Histogram h;
  const auto nb = static_cast<std::size_t>(bins);
  h.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) h.edges[i] = top * static_cast<double>(i) / static_cast<double>(nb);
  h.edges.back() = top;
  h.counts.assign(nb, 0.0);
  const double scale = static_cast<double>(nb) / top;
  for (double v : values) {
    auto idx = static_cast<std::size_t>(std::fabs(v) * scale);
    h.counts[std::min(idx, nb - 1)] += 1.0;
  }
  h.total = static_cast<double>(values.size());
  return h;
}

DistributionStats distribution_stats(std::span<const double> values) {
  if (values.empty()) throw Error("empty input");
  DistributionStats s;
  double sq = 0.0;
  double ab = 0.0;
  for (double v : values) {
    sq += v * v;
    ab += std::fabs(v);
    s.max_abs = std::max(s.max_abs, std::fabs(v));
  }
  s.count = values.size();
  const auto n = static_cast<double>(values.size());
  s.sigma = std::sqrt(sq / n);
  s.mean_abs = ab / n;
  return s;
}

namespace {

void require_valid(const Histogram& h) {
  if (h.counts.empty() || h.edges.size() != h.counts.size() + 1) throw Error("malformed histogram");
  if (!(h.total > 0.0) || !(h.max_value() > 0.0)) throw Error("degenerate distribution");
}

}  // namespace

double histogram_mse(const Histogram& h, const QuantGrid& g) {
  require_valid(h);
  double acc = 0.0;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    if (h.counts[i] == 0.0) continue;
    const double c = h.center(i);
    const double e = c - quantize_value(c, g);
    acc += h.counts[i] * e * e;
  }
  return acc / static_cast<double>(h.bins());
}

ClipResult mse_threshold(const Histogram& h, int bits, int candidates) {
  require_valid(h);
  if (candidates < 2) throw Error("MSE sweep needs at least 2 candidates");
  ClipResult best;
  best.method = ClipMethod::mse;
  best.objective = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= candidates; ++j) {
    const double t = j == candidates ? h.max_value() : h.max_value() * j / candidates;
    const double obj = histogram_mse(h, make_grid(bits, t));
    if (obj <= best.objective) {
      best.objective = obj;
      best.threshold = t;
    }
  }
  return best;
}

// --- ACIQ --------------------------------------------------------------------

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Probability mass of |x| in [a, b] under the folded fitted density.
double folded_mass(DistributionFit fit, double param, double a, double b) {
  if (fit == DistributionFit::gaussian) return 2.0 * (normal_cdf(b / param) - normal_cdf(a / param));
  return std::exp(-a / param) - std::exp(-b / param);
}

}  // namespace

FitResult fit_distribution(const Histogram& h, const DistributionStats& stats) {
  require_valid(h);
  if (!(stats.sigma > 0.0) || !(stats.mean_abs > 0.0)) throw Error("degenerate distribution");
  FitResult r;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    const double p = h.counts[i] / h.total;
    const double g = folded_mass(DistributionFit::gaussian, stats.sigma, h.edges[i], h.edges[i + 1]);
    const double l = folded_mass(DistributionFit::laplacian, stats.mean_abs, h.edges[i], h.edges[i + 1]);
    r.gaussian_error += (g - p) * (g - p);
    r.laplacian_error += (l - p) * (l - p);
  }
  if (r.gaussian_error <= r.laplacian_error) {
    r.fit = DistributionFit::gaussian;
    r.param = stats.sigma;
  } else {
    r.fit = DistributionFit::laplacian;
    r.param = stats.mean_abs;
  }
  return r;
}

double aciq_expected_error(DistributionFit fit, double param, double threshold, int bits) {
  if (!(param > 0.0)) throw Error("ACIQ scale parameter must be positive");
  if (!(threshold > 0.0)) throw Error("ACIQ threshold must be positive");
  const double levels = static_cast<double>((std::int64_t{1} << (bits - 1)) - 1);
  const double step = threshold / levels;
  const double rounding = step * step / 12.0;
  if (fit == DistributionFit::gaussian) {
    const double t = threshold / param;
    const double inside = std::erf(t / std::numbers::sqrt2);
    const double tail_prob = 0.5 * std::erfc(t / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
    const double tail = 2.0 * param * param * ((1.0 + t * t) * tail_prob - t * pdf);
    return inside * rounding + tail;
  }
  const double e = std::exp(-threshold / param);
  return (1.0 - e) * rounding + 2.0 * param * param * e;
}

ClipResult aciq_threshold(const Histogram& h, const DistributionStats& stats, int bits) {
  const FitResult fr = fit_distribution(h, stats);
  const double hi = std::min(32.0 * fr.param, h.max_value());
  auto f = [&](double t) { return aciq_expected_error(fr.fit, fr.param, t, bits); };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > 1e-6 * b) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  ClipResult r;
  r.method = ClipMethod::aciq;
  r.fit = fr.fit;
  r.threshold = fc < fd ? c : d;
  r.objective = std::min(fc, fd);
  // The constrained optimum may sit on the upper boundary.
  const double f_hi = f(hi);
  if (f_hi <= r.objective) {
    r.threshold = hi;
    r.objective = f_hi;
  }
  return r;
}

// --- KL divergence -----------------------------------------------------------

namespace {

void normalize(std::vector<double>& v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (auto& x : v) x /= s;
}

// Moves eps of mass into every bin that is zero in q but not in p, taken
// uniformly from the nonzero bins of q.
void smooth_zero_bins(std::vector<double>& q, const std::vector<double>& p, double eps) {
  std::size_t zeros = 0;
  std::size_t nonzeros = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] == 0.0 && p[j] > 0.0) ++zeros;
    if (q[j] > 0.0) ++nonzeros;
  }
  if (zeros == 0 || nonzeros == 0) return;
  const double take = eps * static_cast<double>(zeros) / static_cast<double>(nonzeros);
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) {
      q[j] -= take;
    } else if (p[j] > 0.0) {
      q[j] = eps;
    }
  }
}

}  // namespace

KlCandidate kl_candidate(const Histogram& h, std::size_t i, int bits) {
  require_valid(h);
  const auto levels = static_cast<std::size_t>((std::int64_t{1} << (bits - 1)) - 1);
  if (i < levels || i > h.bins()) throw Error("KL candidate bin index out of range");

  KlCandidate c;
  std::vector<double>& p = c.reference;
  p.assign(h.counts.begin(), h.counts.begin() + static_cast<std::ptrdiff_t>(i));
  for (std::size_t j = i; j < h.bins(); ++j) p[i - 1] += h.counts[j];

  std::vector<double>& q = c.quantized;
  q.assign(i, 0.0);
  const std::size_t per_group = i / levels;
  for (std::size_t g = 0; g < levels; ++g) {
    const std::size_t lo = g * per_group;
    const std::size_t hi = g + 1 == levels ? i : lo + per_group;
    double mass = 0.0;
    std::size_t support = 0;
    for (std::size_t j = lo; j < hi; ++j) {
      mass += p[j];
      if (p[j] > 0.0) ++support;
    }
    if (support == 0) continue;
    const double each = mass / static_cast<double>(support);
    for (std::size_t j = lo; j < hi; ++j) {
      if (p[j] > 0.0) q[j] = each;
    }
  }

  normalize(p);
  normalize(q);
  smooth_zero_bins(q, p, kKlSmoothingEpsilon);

  double kl = 0.0;
  for (std::size_t j = 0; j < i; ++j) {
    if (p[j] > 0.0) kl += p[j] * std::log(p[j] / q[j]);
  }
  c.divergence = std::max(kl, 0.0);
  return c;
}

ClipResult kl_threshold(const Histogram& h, int bits) {
  require_valid(h);
  const auto first = std::size_t{1} << bits;
  if (h.bins() < first) throw Error("too few bins");
  ClipResult best;
  best.method = ClipMethod::kl;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t i = first; i <= h.bins(); ++i) {
    const double kl = kl_candidate(h, i, bits).divergence;
    if (kl <= best.objective) {
      best.objective = kl;
      best.threshold = h.edges[i];
    }
  }
  return best;
}

ClipResult choose_threshold(std::span<const double> values, ClipMethod method, int bits, const ClipOptions& options) {
  if (method == ClipMethod::none) {
    ClipResult r;
    r.threshold = max_abs(values);
    if (r.threshold == 0.0) throw Error("degenerate distribution");
    r.method = ClipMethod::none;
    return r;
  }
  int bins = options.histogram_bins;
  if (method == ClipMethod::kl) bins = std::max(bins, 1 << bits);
  const Histogram h = build_histogram(values, bins);
  switch (method) {
    case ClipMethod::mse: return mse_threshold(h, bits, options.mse_candidates);
    case ClipMethod::aciq: return aciq_threshold(h, distribution_stats(values), bits);
    case ClipMethod::kl: return kl_threshold(h, bits);
    case ClipMethod::none: break;
  }
  throw Error("unreachable clip method");
}

}  // namespace ocsq
