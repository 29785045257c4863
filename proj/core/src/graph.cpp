#include "ocsq/graph.hpp"

#include <algorithm>

#include "ocsq/error.hpp"
#include "ocsq/profile.hpp"

namespace ocsq {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void shape_error(const Layer& layer, const std::string& what) {
  std::string who = layer.name.empty() ? std::string(layer.kind()) + "#" + std::to_string(layer.id) : layer.name;
  throw Error("layer '" + who + "': " + what);
}

std::size_t pooled(std::size_t in, std::size_t k, std::size_t s) { return (in - k) / s + 1; }

}  // namespace

const Tensor& Layer::weight() const {
  if (auto* fc = std::get_if<FullyConnected>(&op)) return fc->weight;
  if (auto* cv = std::get_if<Conv2D>(&op)) return cv->weight;
  throw Error("layer '" + name + "' has no weights");
}

const Tensor& Layer::bias() const {
  if (auto* fc = std::get_if<FullyConnected>(&op)) return fc->bias;
  if (auto* cv = std::get_if<Conv2D>(&op)) return cv->bias;
  throw Error("layer '" + name + "' has no bias");
}

std::string_view Layer::kind() const {
  return std::visit(overloaded{
                        [](const FullyConnected&) { return std::string_view("fc"); },
                        [](const Conv2D&) { return std::string_view("conv2d"); },
                        [](const BatchNorm&) { return std::string_view("batchnorm"); },
                        [](const ReLU&) { return std::string_view("relu"); },
                        [](const MaxPool&) { return std::string_view("maxpool"); },
                        [](const AvgPool&) { return std::string_view("avgpool"); },
                        [](const Flatten&) { return std::string_view("flatten"); },
                        [](const ChannelSplit&) { return std::string_view("channel_split"); },
                    },
                    op);
}

ModelGraph::ModelGraph(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty()) throw Error("model input shape is empty");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t j = i + 1; j < layers_.size(); ++j) {
      if (layers_[i].id == layers_[j].id) throw Error("duplicate layer id " + std::to_string(layers_[i].id));
    }
  }
}

std::size_t ModelGraph::index_of(int id) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].id == id) return i;
  }
  throw Error("no layer with id " + std::to_string(id));
}

int ModelGraph::next_id() const {
  int m = -1;
  for (const auto& l : layers_) m = std::max(m, l.id);
  return m + 1;
}

std::vector<int> ModelGraph::weighted_ids() const {
  std::vector<int> ids;
  for (const auto& l : layers_) {
    if (l.is_weighted()) ids.push_back(l.id);
  }
  return ids;
}

std::optional<int> ModelGraph::first_weighted_id() const {
  for (const auto& l : layers_) {
    if (l.is_weighted()) return l.id;
  }
  return std::nullopt;
}

Shape layer_output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      overloaded{
          [&](const FullyConnected& fc) -> Shape {
            if (in.size() != 1 || in[0] != fc.weight.dim(1)) {
              shape_error(layer, "expected input [" + std::to_string(fc.weight.dim(1)) + "], got " +
                                     shape_to_string(in));
            }
            return {fc.weight.dim(0)};
          },
          [&](const Conv2D& cv) -> Shape {
            if (in.size() != 3 || in[0] != cv.weight.dim(1)) {
              shape_error(layer, "expected input with " + std::to_string(cv.weight.dim(1)) + " channels, got " +
                                     shape_to_string(in));
            }
            const auto kh = cv.weight.dim(2);
            const auto kw = cv.weight.dim(3);
            if (in[1] + 2 * cv.pad < kh || in[2] + 2 * cv.pad < kw) shape_error(layer, "kernel exceeds input");
            return {cv.weight.dim(0), (in[1] + 2 * cv.pad - kh) / cv.stride + 1,
                    (in[2] + 2 * cv.pad - kw) / cv.stride + 1};
          },
          [&](const BatchNorm& bn) -> Shape {
            if ((in.size() != 1 && in.size() != 3) || in[0] != bn.scale.size()) {
              shape_error(layer, "expected " + std::to_string(bn.scale.size()) + " channels, got " +
                                     shape_to_string(in));
            }
            return in;
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool& p) -> Shape {
            if (in.size() != 3 || in[1] < p.kernel || in[2] < p.kernel) shape_error(layer, "bad pooling input " + shape_to_string(in));
            return {in[0], pooled(in[1], p.kernel, p.stride), pooled(in[2], p.kernel, p.stride)};
          },
          [&](const AvgPool& p) -> Shape {
            if (in.size() != 3 || in[1] < p.kernel || in[2] < p.kernel) shape_error(layer, "bad pooling input " + shape_to_string(in));
            return {in[0], pooled(in[1], p.kernel, p.stride), pooled(in[2], p.kernel, p.stride)};
          },
          [&](const Flatten&) -> Shape { return {shape_numel(in)}; },
          [&](const ChannelSplit& cs) -> Shape {
            if (in.size() != 1 && in.size() != 3) shape_error(layer, "expected rank 1 or 3 input");
            for (auto s : cs.source) {
              if (s >= in[0]) shape_error(layer, "split source channel out of range");
            }
            Shape out = in;
            out[0] = cs.source.size();
            return out;
          },
      },
      layer.op);
}

std::vector<Shape> ModelGraph::infer_shapes() const {
  std::vector<Shape> shapes;
  shapes.reserve(layers_.size());
  Shape cur = input_shape_;
  for (const auto& l : layers_) {
    cur = layer_output_shape(l, cur);
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t ModelGraph::input_channels(int id) const {
  const auto idx = index_of(id);
  if (idx == 0) return input_shape_[0];
  return infer_shapes()[idx - 1][0];
}

std::size_t stored_weight_count(const ModelGraph& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers()) {
    if (!l.is_weighted()) continue;
    const auto& w = l.weight();
    const auto per_row = w.size() / w.dim(0);
    n += (w.dim(0) - l.duplicated_outputs) * per_row;
  }
  return n;
}

std::size_t weighted_input_activation_count(const ModelGraph& m) {
  const auto shapes = m.infer_shapes();
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (!m.layers()[i].is_weighted()) continue;
    n += shape_numel(i == 0 ? m.input_shape() : shapes[i - 1]);
  }
  return n;
}

double relative_weight_size(const ModelGraph& original, const ModelGraph& transformed) {
  return static_cast<double>(stored_weight_count(transformed)) / static_cast<double>(stored_weight_count(original));
}

double relative_activation_size(const ModelGraph& original, const ModelGraph& transformed) {
  return static_cast<double>(weighted_input_activation_count(transformed)) /
         static_cast<double>(weighted_input_activation_count(original));
}

// --- ActivationProfile -------------------------------------------------------

Histogram ActivationProfile::histogram(int key, int bins) const {
  auto it = points.find(key);
  if (it == points.end()) throw Error("profile has no activation point " + std::to_string(key));
  return build_histogram(it->second, bins);
}

void ActivationProfile::merge(const ActivationProfile& other) {
  sample_count += other.sample_count;
  for (const auto& [k, v] : other.points) {
    auto& dst = points[k];
    dst.insert(dst.end(), v.begin(), v.end());
  }
  for (const auto& [k, ch] : other.layer_inputs) {
    auto& dst = layer_inputs[k];
    if (dst.size() < ch.size()) dst.resize(ch.size());
    for (std::size_t c = 0; c < ch.size(); ++c) dst[c].insert(dst[c].end(), ch[c].begin(), ch[c].end());
  }
}

}  // namespace ocsq
