#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ocsq/tensor.hpp"

namespace ocsq {

struct FullyConnected {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct Conv2D {
  Tensor weight;  // [out, in, kh, kw]
  Tensor bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Inference-form batch norm: y = scale[c] * x + shift[c].
struct BatchNorm {
  Tensor scale;
  Tensor shift;
};

struct ReLU {};

struct MaxPool {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct AvgPool {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct Flatten {};

/// Copy-and-scale layer. Output channel j is scale[j] * input[source[j]].
struct ChannelSplit {
  std::vector<std::size_t> source;
  std::vector<double> scale;
};

using LayerOp = std::variant<FullyConnected, Conv2D, BatchNorm, ReLU, MaxPool, AvgPool, Flatten, ChannelSplit>;

/// Input-channel duplication applied to a weighted layer: column `source`
/// was halved and appended as column `created`.
struct ColumnSplit {
  std::size_t source = 0;
  std::size_t created = 0;
  friend bool operator==(const ColumnSplit&, const ColumnSplit&) = default;
};

struct Layer {
  int id = 0;
  std::string name;
  LayerOp op;
  // Weighted layers only: naive weight splits in application order, and the
  // number of trailing output rows that are verbatim copies made for a
  // consumer's weight split.
  std::vector<ColumnSplit> weight_splits;
  std::size_t duplicated_outputs = 0;

  bool is_weighted() const noexcept {
    return std::holds_alternative<FullyConnected>(op) || std::holds_alternative<Conv2D>(op);
  }
  const Tensor& weight() const;
  const Tensor& bias() const;
  std::string_view kind() const;
};

/// Sequential network. Layers keep a stable `id` across transformations so
/// plans and per-layer quantization state can refer to them.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }

  std::size_t index_of(int id) const;
  const Layer& layer(int id) const { return layers_[index_of(id)]; }
  int next_id() const;

  std::vector<int> weighted_ids() const;
  std::optional<int> first_weighted_id() const;

  /// Output shape of every layer for the declared input shape; throws a
  /// shape error naming the first inconsistent layer.
  std::vector<Shape> infer_shapes() const;

  /// Number of input channels seen by layer `id`.
  std::size_t input_channels(int id) const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
};

/// Output shape of one layer given its input shape.
Shape layer_output_shape(const Layer& layer, const Shape& in);

// --- size accounting ---------------------------------------------------------

/// Stored weight elements (biases excluded). Output rows recorded as
/// verbatim copies are not counted: they are realized by copying a channel.
std::size_t stored_weight_count(const ModelGraph& m);

/// Total input activation elements over all weighted layers.
std::size_t weighted_input_activation_count(const ModelGraph& m);

double relative_weight_size(const ModelGraph& original, const ModelGraph& transformed);
double relative_activation_size(const ModelGraph& original, const ModelGraph& transformed);

}  // namespace ocsq
