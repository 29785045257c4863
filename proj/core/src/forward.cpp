#include <algorithm>
#include <cmath>
#include <limits>

#include "ocsq/error.hpp"
#include "ocsq/nn.hpp"

namespace ocsq {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Tensor run_fc(const FullyConnected& fc, const Tensor& x) {
  const auto out = fc.weight.dim(0);
  const auto in = fc.weight.dim(1);
  const auto w = fc.weight.values();
  const auto xv = x.values();
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = fc.bias[o];
    const double* row = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * xv[i];
    y[o] = acc;
  }
  return Tensor({out}, std::move(y));
}

Tensor run_conv(const Conv2D& cv, const Tensor& x, const Shape& out_shape) {
  const auto oc = cv.weight.dim(0);
  const auto ic = cv.weight.dim(1);
  const auto kh = cv.weight.dim(2);
  const auto kw = cv.weight.dim(3);
  const auto ih = x.dim(1);
  const auto iw = x.dim(2);
  const auto oh = out_shape[1];
  const auto ow = out_shape[2];
  const auto w = cv.weight.values();
  const auto xv = x.values();
  const auto pad = static_cast<std::ptrdiff_t>(cv.pad);
  std::vector<double> y(oc * oh * ow);
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = cv.bias[o];
        for (std::size_t c = 0; c < ic; ++c) {
          const double* wk = w.data() + ((o * ic + c) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * cv.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * cv.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
              acc += wk[ky * kw + kx] * xv[(c * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return Tensor(out_shape, std::move(y));
}

template <bool Max>
Tensor run_pool(std::size_t k, std::size_t s, const Tensor& x, const Shape& out_shape) {
  const auto c = x.dim(0);
  const auto ih = x.dim(1);
  const auto iw = x.dim(2);
  const auto oh = out_shape[1];
  const auto ow = out_shape[2];
  const auto xv = x.values();
  std::vector<double> y(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = Max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double v = xv[(ch * ih + oy * s + ky) * iw + ox * s + kx];
            acc = Max ? std::max(acc, v) : acc + v;
          }
        }
        y[(ch * oh + oy) * ow + ox] = Max ? acc : acc / static_cast<double>(k * k);
      }
    }
  }
  return Tensor(out_shape, std::move(y));
}

Tensor run_bn(const BatchNorm& bn, const Tensor& x) {
  const auto c = x.dim(0);
  const auto per = x.size() / c;
  const auto xv = x.values();
  std::vector<double> y(x.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < per; ++i) y[ch * per + i] = bn.scale[ch] * xv[ch * per + i] + bn.shift[ch];
  }
  return Tensor(x.shape(), std::move(y));
}

Tensor run_split(const ChannelSplit& cs, const Tensor& x, const Shape& out_shape) {
  const auto per = x.size() / x.dim(0);
  const auto xv = x.values();
  std::vector<double> y;
  y.reserve(cs.source.size() * per);
  for (std::size_t j = 0; j < cs.source.size(); ++j) {
    const double* src = xv.data() + cs.source[j] * per;
    for (std::size_t i = 0; i < per; ++i) y.push_back(cs.scale[j] * src[i]);
  }
  return Tensor(out_shape, std::move(y));
}

}  // namespace

Tensor apply_layer(const Layer& layer, const Tensor& input) {
  const Shape out_shape = layer_output_shape(layer, input.shape());
  return std::visit(overloaded{
                        [&](const FullyConnected& fc) { return run_fc(fc, input); },
                        [&](const Conv2D& cv) { return run_conv(cv, input, out_shape); },
                        [&](const BatchNorm& bn) { return run_bn(bn, input); },
                        [&](const ReLU&) {
                          std::vector<double> y(input.values().begin(), input.values().end());
                          for (auto& v : y) v = std::max(v, 0.0);
                          return Tensor(input.shape(), std::move(y));
                        },
                        [&](const MaxPool& p) { return run_pool<true>(p.kernel, p.stride, input, out_shape); },
                        [&](const AvgPool& p) { return run_pool<false>(p.kernel, p.stride, input, out_shape); },
                        [&](const Flatten&) { return input.reshaped(out_shape); },
                        [&](const ChannelSplit& cs) { return run_split(cs, input, out_shape); },
                    },
                    layer.op);
}

std::vector<ActivationPoint> activation_points(const ModelGraph& model) {
  const auto& layers = model.layers();
  std::vector<ActivationPoint> points;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::size_t at = i;
    if (std::holds_alternative<ReLU>(layers[i].op)) {
      // point after the ReLU
    } else if (layers[i].is_weighted()) {
      while (at + 1 < layers.size() && std::holds_alternative<BatchNorm>(layers[at + 1].op)) ++at;
      if (at + 1 < layers.size() && std::holds_alternative<ReLU>(layers[at + 1].op)) continue;
    } else {
      continue;
    }
    for (std::size_t j = at + 1; j < layers.size() && !layers[j].is_weighted(); ++j) {
      if (std::holds_alternative<ReLU>(layers[j].op)) break;
      if (std::holds_alternative<ChannelSplit>(layers[j].op)) {
        at = j;
        break;
      }
    }
    points.push_back({layers[i].id, at});
  }
  return points;
}

bool QuantPolicy::skips(const ModelGraph& model, int layer_id) const {
  if (skip_first_weighted && model.first_weighted_id() == layer_id) return true;
  return std::find(skip_ids.begin(), skip_ids.end(), layer_id) != skip_ids.end();
}

PreparedModel prepare(const ModelGraph& model, const QuantPolicy& policy) {
  PreparedModel pm{model, {}};
  for (auto& layer : pm.graph.mutable_layers()) {
    if (!layer.is_weighted()) continue;
    auto it = policy.weights.find(layer.id);
    if (it == policy.weights.end()) continue;
    const WeightQuant& wq = it->second;
    const Tensor& src = wq.adjusted && wq.adjusted->shape() == layer.weight().shape() ? *wq.adjusted : layer.weight();
    Tensor q = quantize(src, wq.grid);
    if (auto* fc = std::get_if<FullyConnected>(&layer.op)) fc->weight = std::move(q);
    if (auto* cv = std::get_if<Conv2D>(&layer.op)) cv->weight = std::move(q);
  }
  for (const auto& pt : activation_points(model)) {
    auto it = policy.activations.find(pt.key);
    if (it != policy.activations.end()) pm.quantize_after[pt.after_index] = it->second;
  }
  return pm;
}

Tensor forward(const PreparedModel& model, const Tensor& input, const LayerObserver& observer) {
  if (input.shape() != model.graph.input_shape()) {
    throw Error("input shape " + shape_to_string(input.shape()) + " does not match model input " +
                shape_to_string(model.graph.input_shape()));
  }
  Tensor cur = input;
  const auto& layers = model.graph.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = apply_layer(layers[i], cur);
    if (auto it = model.quantize_after.find(i); it != model.quantize_after.end()) cur = quantize(cur, it->second);
    if (observer) observer(i, cur);
  }
  return cur;
}

Tensor forward(const ModelGraph& model, const Tensor& input) { return forward(PreparedModel{model, {}}, input); }

Tensor forward(const ModelGraph& model, const Tensor& input, const QuantPolicy& policy) {
  return forward(prepare(model, policy), input);
}

std::vector<Tensor> forward_batch(const PreparedModel& model, std::span<const Tensor> inputs) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(forward(model, x));
  return out;
}

std::size_t argmax(const Tensor& t) {
  if (t.empty()) throw Error("empty input");
  const auto v = t.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double top1_accuracy(std::span<const Tensor> outputs, std::span<const int> labels) {
  if (outputs.size() != labels.size() || outputs.empty()) throw Error("accuracy needs one label per output");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (static_cast<int>(argmax(outputs[i])) == labels[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(outputs.size());
}

double output_mse(std::span<const Tensor> outputs, std::span<const Tensor> reference) {
  if (outputs.size() != reference.size() || outputs.empty()) throw Error("MSE needs matching output sets");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].shape() != reference[i].shape()) throw Error("MSE needs matching output shapes");
    for (std::size_t j = 0; j < outputs[i].size(); ++j) {
      const double d = outputs[i][j] - reference[i][j];
      acc += d * d;
    }
    n += outputs[i].size();
  }
  return acc / static_cast<double>(n);
}

}  // namespace ocsq
