#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "ocsq/graph.hpp"
#include "ocsq/profile.hpp"
#include "ocsq/tensor.hpp"

namespace ocsq {

struct SplitPair {
  double first = 0.0;
  double second = 0.0;
};

/// (w/2, w/2).
SplitPair split_value_naive(double w);

/// Quantization-aware split ((w - step/2)/2, (w + step/2)/2). The pair sums
/// to w and preserves the quantized value: Q(first) + Q(second) == Q(w) for
/// any grid with this step (in the unsaturated range).
SplitPair split_value_qa(double w, double step);

/// Greedy weight channel selection. Repeatedly picks the input channel (axis
/// 1) holding the largest |w|, halves it and appends the halved copy, so later
/// picks may land on a created channel (index >= C). Ties go to the lowest
/// index.
std::vector<std::size_t> select_weight_channels(const Tensor& layer_weights, std::size_t n_splits);

/// Ranks channels by how many samples exceed the layer-wide `pct`
/// percentile, descending, ties to the lower index.
std::vector<std::size_t> select_activation_channels(const ChannelSamples& profile, std::size_t n_splits,
                                                    double pct = 0.99);

enum class SplitTarget { weights, activations };
std::string_view to_string(SplitTarget t);
SplitTarget parse_split_target(std::string_view name);

struct SplitRecord {
  int layer_id = 0;
  std::size_t source_channel = 0;
  std::size_t new_channel = 0;
  friend bool operator==(const SplitRecord&, const SplitRecord&) = default;
};

struct SplitPlan {
  double expand_ratio = 0.0;
  SplitTarget target = SplitTarget::weights;
  bool qa = false;
  std::vector<SplitRecord> records;

  std::vector<SplitRecord> records_for(int layer_id) const;
  bool empty() const noexcept { return records.empty(); }
  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// ceil(r * C), tolerant of the representation error in r (0.05 * 100 -> 5).
std::size_t split_count(double ratio, std::size_t channels);

/// Weighted layers whose input channels may be split for `target`: never the
/// first weighted layer nor a layer fed by the network input. Weight splits
/// additionally need a producer reachable through channel-wise layers only.
std::vector<int> splittable_layers(const ModelGraph& model, SplitTarget target);

/// Builds a plan with ceil(r * C) records per splittable layer. Activation
/// targets need a profile of the same model.
SplitPlan plan_splits(const ModelGraph& model, double ratio, SplitTarget target, bool qa,
                      const ActivationProfile* profile = nullptr, double pct = 0.99);

}  // namespace ocsq
