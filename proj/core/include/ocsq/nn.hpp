#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "ocsq/clip.hpp"
#include "ocsq/graph.hpp"
#include "ocsq/ocs.hpp"
#include "ocsq/profile.hpp"
#include "ocsq/quant.hpp"

namespace ocsq {

// --- activation quantization points -------------------------------------------

/// Activations are quantized after every ReLU and after every weighted layer
/// (plus trailing batch norms) not followed by a ReLU. When a ChannelSplit sits
/// between such a point and the next weighted layer, quantization moves past
/// the split so it sees the halved channels. `key` is the id of the ReLU or
/// weighted layer that defines the point and survives graph rewrites.
struct ActivationPoint {
  int key = 0;
  std::size_t after_index = 0;
};

std::vector<ActivationPoint> activation_points(const ModelGraph& model);

// --- quantization policy -----------------------------------------------------

struct WeightQuant {
  QuantGrid grid;
  ClipResult clip;
  // Quantization-aware split weights replacing the naive ones at quantization.
  std::optional<Tensor> adjusted;
};

struct QuantPolicy {
  std::optional<int> weight_bits = 8;  // nullopt keeps weights in float
  std::optional<int> act_bits = 8;     // nullopt keeps activations in float
  ClipMethod weight_clip = ClipMethod::none;
  ClipMethod act_clip = ClipMethod::none;
  bool skip_first_weighted = true;
  std::vector<int> skip_ids;
  bool qa = false;
  ClipOptions clip_options;

  // Filled by calibrate().
  std::map<int, WeightQuant> weights;
  std::map<int, QuantGrid> activations;

  bool skips(const ModelGraph& model, int layer_id) const;
};

// --- forward -----------------------------------------------------------------

/// Weights already quantized and activation grids keyed by layer position.
struct PreparedModel {
  ModelGraph graph;
  std::map<std::size_t, QuantGrid> quantize_after;
};

PreparedModel prepare(const ModelGraph& model, const QuantPolicy& policy);

/// Observer invoked with (layer index, layer output) for every layer.
using LayerObserver = std::function<void(std::size_t, const Tensor&)>;

Tensor forward(const ModelGraph& model, const Tensor& input);
Tensor forward(const ModelGraph& model, const Tensor& input, const QuantPolicy& policy);
Tensor forward(const PreparedModel& model, const Tensor& input, const LayerObserver& observer = {});
std::vector<Tensor> forward_batch(const PreparedModel& model, std::span<const Tensor> inputs);

/// Runs a single layer.
Tensor apply_layer(const Layer& layer, const Tensor& input);

// --- transforms --------------------------------------------------------------

/// Rewrites the model per `plan`. The result is functionally equivalent in
/// float arithmetic.
ModelGraph apply_split_plan(const ModelGraph& model, const SplitPlan& plan);

// --- profiling / calibration -------------------------------------------------

ActivationProfile profile_activations(const ModelGraph& model, std::span<const Tensor> samples);

/// Resolves every weight and activation grid. Weight grids come from the
/// (already split) weights; with policy.qa the naive splits are replaced by
/// quantization-aware ones against the final step. Activation grids need a
/// profile of `model` itself.
QuantPolicy calibrate(const ModelGraph& model, const QuantPolicy& policy, const ActivationProfile* profile);

struct OracleOptions {
  double ratio = 0.02;
  std::size_t batch_size = 1;
  double pct = 0.99;
};

/// Activation profile as seen by oracle OCS: each batch of `samples` is split
/// with channels chosen on that batch before values are recorded.
ActivationProfile profile_oracle_activations(const ModelGraph& model, std::span<const Tensor> samples,
                                             const OracleOptions& options);

/// Oracle activation OCS on one batch: selects channels from the batch's own
/// float activations, applies that batch-local plan and runs the quantized
/// forward. Returns the stacked outputs [B, ...].
Tensor oracle_activation_ocs(const ModelGraph& model, const QuantPolicy& policy, std::span<const Tensor> batch,
                             const OracleOptions& options);

// --- evaluation helpers ------------------------------------------------------

std::size_t argmax(const Tensor& t);
double top1_accuracy(std::span<const Tensor> outputs, std::span<const int> labels);
double output_mse(std::span<const Tensor> outputs, std::span<const Tensor> reference);

}  // namespace ocsq
