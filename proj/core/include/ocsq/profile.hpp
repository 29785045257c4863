#pragma once

#include <map>
#include <vector>

#include "ocsq/clip.hpp"
#include "ocsq/tensor.hpp"

namespace ocsq {

/// Per-channel observed values; outer index is the channel.
using ChannelSamples = std::vector<std::vector<double>>;

/// Float activations observed on a set of profiling inputs.
struct ActivationProfile {
  std::size_t sample_count = 0;
  // Activation quantization point key -> every value observed there.
  std::map<int, std::vector<double>> points;
  // Weighted layer id -> per-channel values of that layer's input.
  std::map<int, ChannelSamples> layer_inputs;

  Histogram histogram(int key, int bins = kDefaultHistogramBins) const;

  /// Appends `other` (same model structure) in order.
  void merge(const ActivationProfile& other);
};

}  // namespace ocsq
