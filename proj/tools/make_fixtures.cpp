// Generates the committed test fixtures under a target directory.
//
// Networks are random (He-initialized) teachers; labels are the teacher's own
// top-1 prediction, keeping only samples with a clear margin. The outlier
// fixture takes a teacher and plants a few large weights on weakly active
// input channels of every quantized layer.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ocsq/error.hpp"
#include "ocsq/graph.hpp"
#include "ocsq/model_io.hpp"
#include "ocsq/nn.hpp"

using namespace ocsq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Rng = std::mt19937_64;

// Samples below this quantile of teacher margins are dropped: 8-bit weight
// noise alone would otherwise flip them.
constexpr double kMarginQuantile = 0.5;

// Values are rounded through float so the in-memory fixture equals the file.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor normal_tensor(Rng& rng, Shape shape, double mean, double stddev) {
  std::normal_distribution<double> nd(mean, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = f32(nd(rng));
  return Tensor(std::move(shape), std::move(v));
}

Layer fc(int id, std::string name, Rng& rng, std::size_t out, std::size_t in) {
  const double he = std::sqrt(2.0 / static_cast<double>(in));
  return Layer{id, std::move(name), FullyConnected{normal_tensor(rng, {out, in}, 0.0, he),
                                                   normal_tensor(rng, {out}, 0.0, 0.05)}};
}

Layer conv(int id, std::string name, Rng& rng, std::size_t out, std::size_t in, std::size_t k, std::size_t pad) {
  const double he = std::sqrt(2.0 / static_cast<double>(in * k * k));
  return Layer{id, std::move(name),
               Conv2D{normal_tensor(rng, {out, in, k, k}, 0.0, he), normal_tensor(rng, {out}, 0.0, 0.05), 1, pad}};
}

Layer bn(int id, std::string name, Rng& rng, std::size_t c) {
  return Layer{id, std::move(name), BatchNorm{normal_tensor(rng, {c}, 1.0, 0.1), normal_tensor(rng, {c}, 0.0, 0.1)}};
}

Layer simple(int id, std::string name, LayerOp op) { return Layer{id, std::move(name), std::move(op)}; }

// Ten smooth 8x8 class prototypes; samples add pixel noise.
std::vector<Tensor> digit_like_inputs(Rng& rng, std::size_t n, const Shape& shape) {
  std::vector<std::vector<double>> protos(10, std::vector<double>(64));
  std::uniform_real_distribution<double> u(0.0, 8.0);
  for (auto& p : protos) {
    for (int blob = 0; blob < 3; ++blob) {
      const double cy = u(rng), cx = u(rng), r = 1.0 + u(rng) / 4.0;
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
          p[y * 8 + x] += std::exp(-d2 / (2 * r * r));
        }
      }
    }
  }
  std::uniform_int_distribution<int> cls(0, 9);
  std::normal_distribution<double> noise(0.0, 0.35);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = protos[cls(rng)];
    std::vector<double> v(64);
    for (int j = 0; j < 64; ++j) v[j] = f32(p[j] + noise(rng));
    out.emplace_back(shape, std::move(v));
  }
  return out;
}

double margin(const Tensor& logits) {
  std::vector<double> v(logits.values().begin(), logits.values().end());
  std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
  return v[0] - v[1];
}

// Keeps the first `want` candidates whose teacher margin exceeds the
// `quantile` margin of all candidates; labels are the teacher's argmax.
Dataset labeled_set(const ModelGraph& teacher, std::vector<Tensor> candidates, std::size_t n_profile,
                    std::size_t n_eval, double quantile) {
  std::vector<Tensor> outs;
  std::vector<double> margins;
  for (const auto& x : candidates) {
    outs.push_back(forward(teacher, x));
    margins.push_back(margin(outs.back()));
  }
  std::vector<double> sorted = margins;
  std::sort(sorted.begin(), sorted.end());
  const double cut = sorted[static_cast<std::size_t>(quantile * static_cast<double>(sorted.size() - 1))];
  Dataset d;
  for (std::size_t i = 0; i < candidates.size() && d.inputs.size() < n_profile + n_eval; ++i) {
    if (margins[i] < cut) continue;
    d.split.push_back(d.inputs.size() < n_profile ? SplitRole::profile : SplitRole::eval);
    d.inputs.push_back(candidates[i]);
    d.labels.push_back(static_cast<int>(argmax(outs[i])));
  }
  if (d.inputs.size() < n_profile + n_eval) throw Error("not enough candidates survive the margin filter");
  return d;
}

double accuracy(const ModelGraph& m, const Dataset& d, SplitRole role) {
  std::vector<Tensor> outs;
  std::vector<int> labels;
  for (auto i : d.indices(role)) {
    outs.push_back(forward(m, d.inputs[i]));
    labels.push_back(d.labels[i]);
  }
  return top1_accuracy(outs, labels);
}

void write(const fs::path& dir, const std::string& name, const ModelGraph& m, const json& meta) {
  save_model(m, dir / (name + ".qnt"), meta.dump());
  // Reload check: the stored model must be the one measured here.
  if (load_model(dir / (name + ".qnt")).layers().size() != m.layers().size()) throw Error("reload mismatch");
  std::cout << "wrote " << (dir / (name + ".qnt")).string() << '\n';
}

void write(const fs::path& dir, const std::string& name, Dataset d, const json& meta) {
  d.metadata_json = meta.dump();
  save_dataset(d, dir / (name + ".qnt"));
  std::cout << "wrote " << (dir / (name + ".qnt")).string() << " (" << d.inputs.size() << " samples)\n";
}

// --- mlp / cnn ---------------------------------------------------------------------

void make_mlp(const fs::path& dir) {
  Rng rng(101);
  ModelGraph m({1, 8, 8}, {simple(0, "flatten", Flatten{}), fc(1, "fc1", rng, 32, 64), simple(2, "relu1", ReLU{}),
                           fc(3, "fc2", rng, 10, 32)});
  Dataset d = labeled_set(m, digit_like_inputs(rng, 800, {1, 8, 8}), 128, 128, kMarginQuantile);
  write(dir, "mlp", m, {{"fixture", "mlp"}, {"float_accuracy", accuracy(m, d, SplitRole::eval)}});
  write(dir, "mlp_data", d, {{"fixture", "mlp"}});
}

void make_cnn(const fs::path& dir) {
  Rng rng(202);
  ModelGraph m({1, 8, 8}, {conv(0, "conv1", rng, 8, 1, 3, 1), bn(1, "bn1", rng, 8), simple(2, "relu1", ReLU{}),
                           simple(3, "pool1", MaxPool{2, 2}), conv(4, "conv2", rng, 16, 8, 3, 1),
                           simple(5, "relu2", ReLU{}), simple(6, "pool2", AvgPool{2, 2}),
                           simple(7, "flatten", Flatten{}), fc(8, "fc", rng, 10, 64)});
  Dataset d = labeled_set(m, digit_like_inputs(rng, 800, {1, 8, 8}), 128, 128, kMarginQuantile);
  write(dir, "cnn", m, {{"fixture", "cnn"}, {"float_accuracy", accuracy(m, d, SplitRole::eval)}});
  write(dir, "cnn_data", d, {{"fixture", "cnn"}});
}

// --- outlier fixture -------------------------------------------------------------

struct Planted {
  int layer;
  std::size_t row, col;
  double value;
};

constexpr std::size_t kOutlierProfile = 512;
constexpr std::size_t kOutlierEval = 200;
constexpr std::size_t kOutliersPerLayer = 4;
constexpr double kOutlierScale = 10.0;  // times the layer's 99th-percentile |w|

void make_outlier(const fs::path& dir) {
  Rng rng(303);
  ModelGraph teacher({1, 8, 8}, {simple(0, "flatten", Flatten{}), fc(1, "fc1", rng, 128, 64),
                                 simple(2, "relu1", ReLU{}), fc(3, "fc2", rng, 128, 128),
                                 simple(4, "relu2", ReLU{}), fc(5, "fc3", rng, 10, 128)});
  Dataset d = labeled_set(teacher, digit_like_inputs(rng, 8000, {1, 8, 8}), kOutlierProfile, kOutlierEval, kMarginQuantile);

  std::vector<Tensor> profile_inputs;
  for (auto i : d.indices(SplitRole::profile)) profile_inputs.push_back(d.inputs[i]);
  const ActivationProfile prof = profile_activations(teacher, profile_inputs);

  ModelGraph model = teacher;
  std::vector<Planted> planted;
  std::uniform_int_distribution<int> coin(0, 1);
  for (int id : {3, 5}) {
    Layer& l = model.mutable_layers()[model.index_of(id)];
    auto& op = std::get<FullyConnected>(l.op);
    const auto rows = op.weight.dim(0), cols = op.weight.dim(1);
    std::vector<double> mags(op.weight.size());
    std::transform(op.weight.values().begin(), op.weight.values().end(), mags.begin(),
                   [](double v) { return std::abs(v); });
    const double p99 = percentile(mags, 0.99);

    // Weakly active but not dead input channels carry the outliers.
    const auto& chans = prof.layer_inputs.at(id);
    std::vector<std::pair<double, std::size_t>> activity;
    for (std::size_t c = 0; c < cols; ++c) {
      double sum = 0.0;
      for (double v : chans[c]) sum += std::abs(v);
      const double mean = sum / static_cast<double>(chans[c].size());
      if (mean > 0.0) activity.emplace_back(mean, c);
    }
    std::sort(activity.begin(), activity.end());
    std::vector<double> w(op.weight.values().begin(), op.weight.values().end());
    std::uniform_int_distribution<std::size_t> pick_row(0, rows - 1);
    std::uniform_real_distribution<double> jitter(0.8, 1.2);
    for (std::size_t k = 0; k < kOutliersPerLayer; ++k) {
      const std::size_t col = activity[k].second, row = pick_row(rng);
      const double v = f32((coin(rng) ? 1.0 : -1.0) * kOutlierScale * p99 * jitter(rng));
      w[row * cols + col] = v;
      planted.push_back({id, row, col, v});
    }
    op.weight = Tensor(op.weight.shape(), std::move(w));

    std::vector<double> after(op.weight.size());
    std::transform(op.weight.values().begin(), op.weight.values().end(), after.begin(),
                   [](double v) { return std::abs(v); });
    const double ratio = max_abs(op.weight) / percentile(after, 0.99);
    if (ratio < 5.0) throw Error(l.name + ": max/p99 ratio " + std::to_string(ratio) + " below 5");
    std::cout << l.name << ": max/p99 = " << ratio << '\n';
  }

  const double teacher_acc = accuracy(teacher, d, SplitRole::eval);
  const double acc = accuracy(model, d, SplitRole::eval);
  std::cout << "outlier fixture float accuracy " << acc << " (teacher " << teacher_acc << ")\n";
  if (teacher_acc - acc > 1.0) throw Error("outliers cost more than 1 point of float accuracy");

  json outliers = json::array();
  for (const auto& p : planted) outliers.push_back({{"layer", p.layer}, {"row", p.row}, {"col", p.col}, {"value", p.value}});
  write(dir, "outlier", model,
        {{"fixture", "outlier"}, {"float_accuracy", acc}, {"teacher_accuracy", teacher_acc}, {"outliers", outliers}});
  write(dir, "outlier_data", d, {{"fixture", "outlier"}});
}

// --- oracle fixture ----------------------------------------------------------------

// Every sample drives one random input channel far above the rest, so the
// hidden channel holding a sample's outlier changes from sample to sample.
void make_oracle(const fs::path& dir) {
  Rng rng(404);
  constexpr std::size_t kIn = 16;
  std::vector<double> eye(kIn * kIn);
  std::normal_distribution<double> small(0.0, 0.02);
  for (std::size_t r = 0; r < kIn; ++r) {
    for (std::size_t c = 0; c < kIn; ++c) eye[r * kIn + c] = f32((r == c ? 1.0 : 0.0) + small(rng));
  }
  ModelGraph m({kIn}, {Layer{0, "fc1", FullyConnected{Tensor({kIn, kIn}, eye), Tensor::zeros({kIn})}},
                       simple(1, "relu1", ReLU{}), fc(2, "fc2", rng, 32, kIn), simple(3, "relu2", ReLU{}),
                       fc(4, "fc3", rng, 10, 32)});
  Dataset d;
  std::uniform_real_distribution<double> base(0.0, 1.0);
  std::uniform_real_distribution<double> spike(8.0, 12.0);
  std::uniform_int_distribution<std::size_t> chan(0, kIn - 1);
  for (std::size_t i = 0; i < 320; ++i) {
    std::vector<double> v(kIn);
    for (auto& x : v) x = f32(base(rng));
    v[chan(rng)] = f32(spike(rng));
    d.inputs.emplace_back(Shape{kIn}, std::move(v));
    d.split.push_back(i < 256 ? SplitRole::profile : SplitRole::eval);
  }
  write(dir, "oracle", m, {{"fixture", "oracle"}});
  write(dir, "oracle_data", d, {{"fixture", "oracle"}});
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures OUT_DIR\n";
    return 2;
  }
  try {
    const fs::path dir = argv[1];
    fs::create_directories(dir);
    make_mlp(dir);
    make_cnn(dir);
    make_outlier(dir);
    make_oracle(dir);
  } catch (const std::exception& e) {
    std::cerr << "make_fixtures: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
