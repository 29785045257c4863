#include <algorithm>
#include <map>

#include "ocsq/error.hpp"
#include "ocsq/nn.hpp"

namespace ocsq {

namespace {

struct Column {
  std::size_t source;
  double scale;
};

// Rebuilds a weight tensor whose input channels (axis 1) follow `cols`.
Tensor remap_columns(const Tensor& w, const std::vector<Column>& cols) {
  const auto out = w.dim(0);
  const auto in = w.dim(1);
  const auto inner = w.size() / (out * in);
  const auto v = w.values();
  std::vector<double> data;
  data.reserve(out * cols.size() * inner);
  for (std::size_t o = 0; o < out; ++o) {
    for (const auto& c : cols) {
      const double* src = v.data() + (o * in + c.source) * inner;
      for (std::size_t k = 0; k < inner; ++k) data.push_back(src[k] * c.scale);
    }
  }
  Shape shape = w.shape();
  shape[1] = cols.size();
  return Tensor(std::move(shape), std::move(data));
}

// Rebuilds a tensor whose leading axis follows `rows`.
Tensor remap_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const auto per = t.size() / t.dim(0);
  const auto v = t.values();
  std::vector<double> data;
  data.reserve(rows.size() * per);
  for (auto r : rows) data.insert(data.end(), v.begin() + static_cast<std::ptrdiff_t>(r * per),
                                  v.begin() + static_cast<std::ptrdiff_t>((r + 1) * per));
  Shape shape = t.shape();
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(data));
}

void set_weight(Layer& layer, Tensor w) {
  if (auto* fc = std::get_if<FullyConnected>(&layer.op)) fc->weight = std::move(w);
  if (auto* cv = std::get_if<Conv2D>(&layer.op)) cv->weight = std::move(w);
}

void set_bias(Layer& layer, Tensor b) {
  if (auto* fc = std::get_if<FullyConnected>(&layer.op)) fc->bias = std::move(b);
  if (auto* cv = std::get_if<Conv2D>(&layer.op)) cv->bias = std::move(b);
}

std::string layer_label(const Layer& l) { return l.name.empty() ? "#" + std::to_string(l.id) : "'" + l.name + "'"; }

void split_weights(ModelGraph& model, int layer_id, const std::vector<SplitRecord>& records) {
  const auto eligible = splittable_layers(model, SplitTarget::weights);
  if (std::find(eligible.begin(), eligible.end(), layer_id) == eligible.end()) {
    throw Error("layer " + layer_label(model.layer(layer_id)) +
                ": producer of its input channels cannot be expanded for weight splitting");
  }
  auto& layers = model.mutable_layers();
  const std::size_t li = model.index_of(layer_id);
  Layer& consumer = layers[li];
  const std::size_t channels = consumer.weight().dim(1);

  std::vector<Column> cols;
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < channels; ++c) {
    cols.push_back({c, 1.0});
    rows.push_back(c);
  }
  for (const auto& r : records) {
    if (r.source_channel >= cols.size() || r.new_channel != cols.size()) {
      throw Error("layer " + layer_label(consumer) + ": split record " + std::to_string(r.source_channel) + "->" +
                  std::to_string(r.new_channel) + " does not match channel count " + std::to_string(cols.size()));
    }
    cols[r.source_channel].scale /= 2.0;
    cols.push_back(cols[r.source_channel]);
    rows.push_back(rows[r.source_channel]);
    consumer.weight_splits.push_back({r.source_channel, r.new_channel});
  }
  set_weight(consumer, remap_columns(consumer.weight(), cols));

  for (std::size_t j = li; j-- > 0;) {
    Layer& l = layers[j];
    if (l.is_weighted()) {
      set_weight(l, remap_rows(l.weight(), rows));
      set_bias(l, remap_rows(l.bias(), rows));
      l.duplicated_outputs += records.size();
      break;
    }
    if (auto* bn = std::get_if<BatchNorm>(&l.op)) {
      bn->scale = remap_rows(bn->scale, rows);
      bn->shift = remap_rows(bn->shift, rows);
    }
  }
}

void split_activations(ModelGraph& model, int layer_id, const std::vector<SplitRecord>& records) {
  const auto eligible = splittable_layers(model, SplitTarget::activations);
  if (std::find(eligible.begin(), eligible.end(), layer_id) == eligible.end()) {
    throw Error("layer " + layer_label(model.layer(layer_id)) + ": input comes from the network input");
  }
  std::size_t li = model.index_of(layer_id);
  auto& layers = model.mutable_layers();
  const std::size_t channels = layers[li].weight().dim(1);
  if (li == 0 || !std::holds_alternative<ChannelSplit>(layers[li - 1].op)) {
    Layer split;
    split.id = model.next_id();
    split.name = layers[li].name.empty() ? std::string() : layers[li].name + ".split";
    ChannelSplit cs;
    for (std::size_t c = 0; c < channels; ++c) {
      cs.source.push_back(c);
      cs.scale.push_back(1.0);
    }
    split.op = std::move(cs);
    layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(li), std::move(split));
    ++li;
  }
  auto& cs = std::get<ChannelSplit>(layers[li - 1].op);
  Layer& consumer = layers[li];

  std::vector<Column> cols;
  for (std::size_t c = 0; c < channels; ++c) cols.push_back({c, 1.0});
  for (const auto& r : records) {
    if (r.source_channel >= cols.size() || r.new_channel != cols.size() || cs.source.size() != cols.size()) {
      throw Error("layer " + layer_label(consumer) + ": split record " + std::to_string(r.source_channel) + "->" +
                  std::to_string(r.new_channel) + " does not match channel count " + std::to_string(cols.size()));
    }
    cs.scale[r.source_channel] /= 2.0;
    cs.source.push_back(cs.source[r.source_channel]);
    cs.scale.push_back(cs.scale[r.source_channel]);
    cols.push_back(cols[r.source_channel]);
  }
  set_weight(consumer, remap_columns(consumer.weight(), cols));
}

}  // namespace

ModelGraph apply_split_plan(const ModelGraph& model, const SplitPlan& plan) {
  ModelGraph out = model;
  std::vector<int> order;
  std::map<int, std::vector<SplitRecord>> by_layer;
  for (const auto& r : plan.records) {
    model.index_of(r.layer_id);
    if (!by_layer.count(r.layer_id)) order.push_back(r.layer_id);
    by_layer[r.layer_id].push_back(r);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) { return model.index_of(a) < model.index_of(b); });
  for (int id : order) {
    if (plan.target == SplitTarget::weights) {
      split_weights(out, id, by_layer[id]);
    } else {
      split_activations(out, id, by_layer[id]);
    }
  }
  out.infer_shapes();
  return out;
}

}  // namespace ocsq
