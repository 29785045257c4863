#include <algorithm>
#include <map>
#include <tuple>

#include "ocsq/error.hpp"
#include "ocsq/nn.hpp"

namespace ocsq {

namespace {

void record_channels(ChannelSamples& dst, const Tensor& t) {
  const auto channels = t.dim(0);
  const auto per = t.size() / channels;
  if (dst.size() < channels) dst.resize(channels);
  const auto v = t.values();
  for (std::size_t c = 0; c < channels; ++c) dst[c].insert(dst[c].end(), v.begin() + c * per, v.begin() + (c + 1) * per);
}

// Per-column views of a weight tensor (axis 1), each holding out * inner values.
std::vector<std::vector<double>> columns_of(const Tensor& w) {
  const auto out = w.dim(0);
  const auto in = w.dim(1);
  const auto inner = w.size() / (out * in);
  std::vector<std::vector<double>> cols(in);
  const auto v = w.values();
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t c = 0; c < in; ++c) {
      cols[c].insert(cols[c].end(), v.begin() + (o * in + c) * inner, v.begin() + (o * in + c + 1) * inner);
    }
  }
  return cols;
}

Tensor from_columns(const std::vector<std::vector<double>>& cols, Shape shape) {
  const auto out = shape[0];
  const auto inner = cols.front().size() / out;
  std::vector<double> data;
  data.reserve(out * cols.size() * inner);
  for (std::size_t o = 0; o < out; ++o) {
    for (const auto& col : cols) data.insert(data.end(), col.begin() + o * inner, col.begin() + (o + 1) * inner);
  }
  shape[1] = cols.size();
  return Tensor(std::move(shape), std::move(data));
}

// Undoes naive splits (exact, halving is lossless) and replays them with
// quantization-aware halves for a grid of the given step.
Tensor requantize_splits(const Tensor& split_weights, const std::vector<ColumnSplit>& splits, double step) {
  auto cols = columns_of(split_weights);
  for (auto it = splits.rbegin(); it != splits.rend(); ++it) {
    if (it->created + 1 != cols.size()) throw Error("weight split lineage does not match the weight tensor");
    auto& src = cols[it->source];
    const auto& dup = cols.back();
    for (std::size_t k = 0; k < src.size(); ++k) src[k] += dup[k];
    cols.pop_back();
  }
  for (const auto& s : splits) {
    std::vector<double> created(cols[s.source].size());
    for (std::size_t k = 0; k < created.size(); ++k) {
      const SplitPair p = split_value_qa(cols[s.source][k], step);
      cols[s.source][k] = p.first;
      created[k] = p.second;
    }
    cols.push_back(std::move(created));
  }
  return from_columns(cols, split_weights.shape());
}

}  // namespace

ActivationProfile profile_activations(const ModelGraph& model, std::span<const Tensor> samples) {
  ActivationProfile prof;
  const auto points = activation_points(model);
  const auto& layers = model.layers();
  std::map<std::size_t, int> key_at;
  for (const auto& p : points) key_at[p.after_index] = p.key;

  const PreparedModel pm{model, {}};
  for (const auto& x : samples) {
    if (!layers.empty() && layers[0].is_weighted()) record_channels(prof.layer_inputs[layers[0].id], x);
    forward(pm, x, [&](std::size_t i, const Tensor& out) {
      if (auto it = key_at.find(i); it != key_at.end()) {
        auto& dst = prof.points[it->second];
        dst.insert(dst.end(), out.values().begin(), out.values().end());
      }
      if (i + 1 < layers.size() && layers[i + 1].is_weighted()) record_channels(prof.layer_inputs[layers[i + 1].id], out);
    });
    ++prof.sample_count;
  }
  return prof;
}

QuantPolicy calibrate(const ModelGraph& model, const QuantPolicy& policy, const ActivationProfile* profile) {
  QuantPolicy out = policy;
  out.weights.clear();
  out.activations.clear();

  if (policy.weight_bits) {
    const int bits = *policy.weight_bits;
    auto grid_for = [&](const Tensor& t) {
      const ClipResult cr = choose_threshold(t.values(), policy.weight_clip, bits, policy.clip_options);
      return std::pair{make_grid(bits, cr.threshold), cr};
    };
    for (const auto& layer : model.layers()) {
      if (!layer.is_weighted() || policy.skips(model, layer.id)) continue;
      if (max_abs(layer.weight()) == 0.0) continue;
      auto [grid, clip] = grid_for(layer.weight());
      WeightQuant wq{grid, clip, std::nullopt};
      if (policy.qa && !layer.weight_splits.empty()) {
        // The step depends on the split tensor's range and the QA offsets
        // nudge that range; re-derive at most twice.
        for (int iter = 0; iter < 2; ++iter) {
          const double used = wq.grid.step;
          Tensor adjusted = requantize_splits(layer.weight(), layer.weight_splits, used);
          std::tie(wq.grid, wq.clip) = grid_for(adjusted);
          wq.adjusted = std::move(adjusted);
          if (wq.grid.step == used) break;
        }
      }
      out.weights.emplace(layer.id, std::move(wq));
    }
  }

  if (policy.act_bits) {
    if (profile == nullptr) throw Error("activation quantization needs an activation profile");
    const int bits = *policy.act_bits;
    for (const auto& pt : activation_points(model)) {
      auto it = profile->points.find(pt.key);
      if (it == profile->points.end()) {
        throw Error("activation profile is missing point " + std::to_string(pt.key));
      }
      if (it->second.empty() || max_abs(it->second) == 0.0) continue;
      const ClipResult cr = choose_threshold(it->second, policy.act_clip, bits, policy.clip_options);
      out.activations.emplace(pt.key, make_grid(bits, cr.threshold));
    }
  }
  return out;
}

ActivationProfile profile_oracle_activations(const ModelGraph& model, std::span<const Tensor> samples,
                                             const OracleOptions& options) {
  if (options.batch_size == 0) throw Error("oracle batch size must be positive");
  ActivationProfile merged;
  for (std::size_t start = 0; start < samples.size(); start += options.batch_size) {
    const auto batch = samples.subspan(start, std::min(options.batch_size, samples.size() - start));
    const ActivationProfile seen = profile_activations(model, batch);
    const SplitPlan plan = plan_splits(model, options.ratio, SplitTarget::activations, false, &seen, options.pct);
    ActivationProfile split = profile_activations(apply_split_plan(model, plan), batch);
    split.layer_inputs.clear();
    merged.merge(split);
  }
  return merged;
}

Tensor oracle_activation_ocs(const ModelGraph& model, const QuantPolicy& policy, std::span<const Tensor> batch,
                             const OracleOptions& options) {
  if (batch.empty()) throw Error("oracle OCS needs a non-empty batch");
  const ActivationProfile seen = profile_activations(model, batch);
  const SplitPlan plan = plan_splits(model, options.ratio, SplitTarget::activations, false, &seen, options.pct);
  const PreparedModel pm = prepare(apply_split_plan(model, plan), policy);
  const auto outs = forward_batch(pm, batch);
  return stack(outs);
}

}  // namespace ocsq
