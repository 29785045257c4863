#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocsq/quant.hpp"
#include "ocsq/tensor.hpp"

namespace ocsq {

/// Equal-width histogram of absolute values over [0, max_abs].
struct Histogram {
  std::vector<double> edges;   // bins + 1 strictly increasing values, edges.front() == 0
  std::vector<double> counts;  // bins non-negative weights
  double total = 0.0;

  std::size_t bins() const noexcept { return counts.size(); }
  double max_value() const { return edges.back(); }
  double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

/// Statistics of the signed sample that produced a histogram.
struct DistributionStats {
  double sigma = 0.0;     // sqrt(mean(x^2)): scale of a zero-mean Gaussian fit
  double mean_abs = 0.0;  // mean(|x|): scale of a zero-mean Laplacian fit
  double max_abs = 0.0;
  std::size_t count = 0;
};

enum class ClipMethod { none, mse, aciq, kl };
enum class DistributionFit { gaussian, laplacian };

std::string_view to_string(ClipMethod m);
std::string_view to_string(DistributionFit f);
ClipMethod parse_clip_method(std::string_view name);

struct ClipResult {
  double threshold = 0.0;
  ClipMethod method = ClipMethod::none;
  double objective = 0.0;
  std::optional<DistributionFit> fit;
};

inline constexpr int kDefaultHistogramBins = 2048;
inline constexpr int kDefaultMseCandidates = 512;

Histogram build_histogram(std::span<const double> values, int bins);
inline Histogram build_histogram(const Tensor& t, int bins) { return build_histogram(t.values(), bins); }

DistributionStats distribution_stats(std::span<const double> values);
inline DistributionStats distribution_stats(const Tensor& t) { return distribution_stats(t.values()); }

// --- MSE sweep ---------------------------------------------------------------

/// Histogram MSE at grid g: (1/bins) * sum_i h_i (c_i - Q(c_i))^2 with c_i the
/// bin centers. Values above the clip saturate.
double histogram_mse(const Histogram& h, const QuantGrid& g);

/// Sweeps `candidates` thresholds max*j/candidates, j = 1..candidates, and
/// returns the argmin of histogram_mse. Ties go to the larger threshold.
ClipResult mse_threshold(const Histogram& h, int bits, int candidates = kDefaultMseCandidates);

// --- ACIQ --------------------------------------------------------------------

struct FitResult {
  DistributionFit fit = DistributionFit::gaussian;
  double param = 0.0;  // sigma for gaussian, b for laplacian
  double gaussian_error = 0.0;
  double laplacian_error = 0.0;
};

/// Chooses between a zero-mean Gaussian and Laplacian by the squared L2
/// distance between per-bin fitted probability mass and the normalized
/// histogram. Equal errors resolve to gaussian.
FitResult fit_distribution(const Histogram& h, const DistributionStats& stats);

/// Expected squared quantization error of a zero-mean fitted density with
/// scale `param` under a symmetric 2^bits - 1 level grid clipped at T:
/// P(|x| <= T) * step^2 / 12 + 2 * E[(x - T)^2; x > T].
double aciq_expected_error(DistributionFit fit, double param, double threshold, int bits);

/// Minimizes aciq_expected_error by golden-section search over
/// (0, min(32 * param, max_abs)].
ClipResult aciq_threshold(const Histogram& h, const DistributionStats& stats, int bits);

// --- KL divergence -----------------------------------------------------------

inline constexpr double kKlSmoothingEpsilon = 1e-9;

/// Reference and candidate distributions for clipping at bin index `i`
/// (threshold edges[i]). Both are normalized and smoothed.
struct KlCandidate {
  std::vector<double> reference;
  std::vector<double> quantized;
  double divergence = 0.0;
};

KlCandidate kl_candidate(const Histogram& h, std::size_t i, int bits);

/// Evaluates every bin index i in [2^bits, bins] and returns the upper edge of
/// the bin minimizing KL(P || Q). Ties go to the larger threshold.
ClipResult kl_threshold(const Histogram& h, int bits);

// --- Convenience -------------------------------------------------------------

struct ClipOptions {
  int histogram_bins = kDefaultHistogramBins;
  int mse_candidates = kDefaultMseCandidates;
};

/// Runs the requested method on a raw sample. ClipMethod::none returns max_abs.
ClipResult choose_threshold(std::span<const double> values, ClipMethod method, int bits,
                            const ClipOptions& options = {});

}  // namespace ocsq
