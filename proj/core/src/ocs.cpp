#include "ocsq/ocs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocsq/error.hpp"

namespace ocsq {

SplitPair split_value_naive(double w) { return {w / 2.0, w / 2.0}; }

SplitPair split_value_qa(double w, double step) {
  if (!(step > 0.0)) throw Error("QA split needs a positive grid step");
  const double first = (w - step / 2.0) / 2.0;
  // Derive the second half from the first so the pair sums back to w.
  return {first, w - first};
}

std::vector<std::size_t> select_weight_channels(const Tensor& layer_weights, std::size_t n_splits) {
  if (layer_weights.rank() < 2) throw Error("weight channel selection needs an input-channel axis");
  const std::size_t out = layer_weights.dim(0);
  const std::size_t channels = layer_weights.dim(1);
  const std::size_t inner = layer_weights.size() / (out * channels);
  if (n_splits > 10 * channels) {
    throw Error("requested " + std::to_string(n_splits) + " splits for " + std::to_string(channels) +
                " channels (limit is 10x the channel count)");
  }

  // Halving is exact, so tracking each channel's max |w| is equivalent to
  // rescanning the halved tensor.
  std::vector<double> channel_max(channels, 0.0);
  const auto v = layer_weights.values();
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* p = v.data() + (o * channels + c) * inner;
      for (std::size_t k = 0; k < inner; ++k) channel_max[c] = std::max(channel_max[c], std::fabs(p[k]));
    }
  }

  std::vector<std::size_t> picks;
  picks.reserve(n_splits);
  for (std::size_t s = 0; s < n_splits; ++s) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < channel_max.size(); ++c) {
      if (channel_max[c] > channel_max[best]) best = c;
    }
    picks.push_back(best);
    channel_max[best] /= 2.0;
    channel_max.push_back(channel_max[best]);
  }
  return picks;
}

std::vector<std::size_t> select_activation_channels(const ChannelSamples& profile, std::size_t n_splits, double pct) {
  if (profile.empty()) throw Error("empty profile");
  std::vector<double> all;
  for (const auto& ch : profile) {
    if (ch.empty()) throw Error("empty profile");
    all.insert(all.end(), ch.begin(), ch.end());
  }
  if (n_splits > profile.size()) {
    throw Error("cannot split " + std::to_string(n_splits) + " of " + std::to_string(profile.size()) +
                " activation channels");
  }
  const double cut = percentile(all, pct);
  std::vector<std::size_t> counts(profile.size(), 0);
  for (std::size_t c = 0; c < profile.size(); ++c) {
    counts[c] = static_cast<std::size_t>(std::count_if(profile[c].begin(), profile[c].end(),
                                                       [cut](double x) { return x > cut; }));
  }
  std::vector<std::size_t> order(profile.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  order.resize(n_splits);
  return order;
}

std::string_view to_string(SplitTarget t) { return t == SplitTarget::weights ? "weights" : "activations"; }

SplitTarget parse_split_target(std::string_view name) {
  if (name == "weights") return SplitTarget::weights;
  if (name == "activations" || name == "acts") return SplitTarget::activations;
  throw UsageError("unknown OCS target '" + std::string(name) + "'");
}

std::vector<SplitRecord> SplitPlan::records_for(int layer_id) const {
  std::vector<SplitRecord> out;
  for (const auto& r : records) {
    if (r.layer_id == layer_id) out.push_back(r);
  }
  return out;
}

std::size_t split_count(double ratio, std::size_t channels) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("expand ratio must lie in [0, 1]");
  const double exact = ratio * static_cast<double>(channels);
  const double nearest = std::round(exact);
  if (std::fabs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(exact));
}

std::vector<int> splittable_layers(const ModelGraph& model, SplitTarget target) {
  std::vector<int> ids;
  const auto& layers = model.layers();
  const auto shapes = model.infer_shapes();
  bool seen_weighted = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].is_weighted()) continue;
    if (!seen_weighted) {
      seen_weighted = true;
      continue;
    }
    if (target == SplitTarget::activations) {
      ids.push_back(layers[i].id);
      continue;
    }
    bool ok = true;
    for (std::size_t j = i; j-- > 0;) {
      const auto& l = layers[j];
      if (l.is_weighted()) break;
      if (std::holds_alternative<ChannelSplit>(l.op)) ok = false;
      if (std::holds_alternative<Flatten>(l.op)) {
        const Shape& in = j == 0 ? model.input_shape() : shapes[j - 1];
        if (shape_numel(in) != in[0]) ok = false;
      }
    }
    if (ok) ids.push_back(layers[i].id);
  }
  return ids;
}

SplitPlan plan_splits(const ModelGraph& model, double ratio, SplitTarget target, bool qa,
                      const ActivationProfile* profile, double pct) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("expand ratio must lie in [0, 1]");
  if (target == SplitTarget::activations && profile == nullptr) {
    throw Error("activation OCS needs an activation profile");
  }
  SplitPlan plan;
  plan.expand_ratio = ratio;
  plan.target = target;
  plan.qa = qa;
  if (ratio == 0.0) return plan;

  for (int id : splittable_layers(model, target)) {
    const std::size_t channels = model.input_channels(id);
    const std::size_t n = split_count(ratio, channels);
    if (n == 0) continue;
    std::vector<std::size_t> picks;
    if (target == SplitTarget::weights) {
      picks = select_weight_channels(model.layer(id).weight(), n);
    } else {
      auto it = profile->layer_inputs.find(id);
      if (it == profile->layer_inputs.end()) throw Error("profile has no samples for layer " + std::to_string(id));
      if (it->second.size() != channels) {
        throw Error("profile of layer " + std::to_string(id) + " has " + std::to_string(it->second.size()) +
                    " channels, the model has " + std::to_string(channels));
      }
      picks = select_activation_channels(it->second, n, pct);
    }
    std::size_t next = channels;
    for (auto c : picks) plan.records.push_back({id, c, next++});
  }
  return plan;
}

}  // namespace ocsq
