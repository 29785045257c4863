#include "ocsq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ocsq/error.hpp"

namespace ocsq {

void RunConfig::validate() const {
  auto check_bits = [](const std::optional<int>& b, const char* what) {
    if (b && (*b < 2 || *b > 16)) throw UsageError(std::string(what) + " must be in [2, 16], got " + std::to_string(*b));
  };
  check_bits(wbits, "weight bits");
  check_bits(abits, "activation bits");
  if (!(ocs_ratio >= 0.0 && ocs_ratio <= 1.0)) throw UsageError("OCS ratio must be in [0, 1]");
  if (profile_samples < 1) throw UsageError("profile samples must be at least 1");
  if (oracle) {
    if (oracle_batch < 1) throw UsageError("oracle batch size must be at least 1");
    if (ocs_target != SplitTarget::activations) throw UsageError("oracle OCS needs --ocs-target acts");
    if (!abits) throw UsageError("oracle OCS needs quantized activations");
  }
}

Experiment load_experiment(const std::filesystem::path& model, const std::filesystem::path& data) {
  Experiment exp;
  exp.name = model.stem().string();
  exp.model = load_model(model);
  exp.data = load_dataset(data);
  if (!exp.data.inputs.empty() && exp.data.inputs.front().shape() != exp.model.input_shape()) {
    throw Error("dataset samples have shape " + shape_to_string(exp.data.inputs.front().shape()) +
                " but the model expects " + shape_to_string(exp.model.input_shape()));
  }
  return exp;
}

std::vector<Tensor> profiling_subset(const Dataset& data, std::size_t count, std::uint64_t seed) {
  auto idx = data.indices(SplitRole::profile);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, idx.size()));
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data.inputs[i]);
  return out;
}

std::vector<Tensor> eval_inputs(const Dataset& data) {
  std::vector<Tensor> out;
  for (auto i : data.indices(SplitRole::eval)) out.push_back(data.inputs[i]);
  return out;
}

std::vector<int> eval_labels(const Dataset& data) {
  std::vector<int> out;
  if (data.labels.empty()) return out;
  for (auto i : data.indices(SplitRole::eval)) out.push_back(data.labels[i]);
  return out;
}

namespace {

bool labeled(const Dataset& d) { return !d.labels.empty(); }

double metric(const Experiment& exp, std::span<const Tensor> outputs) {
  if (labeled(exp.data)) return top1_accuracy(outputs, eval_labels(exp.data));
  const auto inputs = eval_inputs(exp.data);
  std::vector<Tensor> reference;
  for (const auto& x : inputs) reference.push_back(forward(exp.model, x));
  return output_mse(outputs, reference);
}

bool needs_profile(const RunConfig& cfg) {
  return cfg.abits.has_value() || (cfg.ocs_target == SplitTarget::activations && cfg.ocs_ratio > 0.0);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

RunResult run_quantize(const Experiment& exp, const RunConfig& cfg, const ActivationProfile* base_profile) {
  cfg.validate();
  const auto evals = eval_inputs(exp.data);
  if (evals.empty()) throw Error("dataset has no evaluation samples");

  QuantPolicy policy;
  policy.weight_bits = cfg.wbits;
  policy.act_bits = cfg.abits;
  policy.weight_clip = cfg.clip_w;
  policy.act_clip = cfg.clip_a;
  policy.qa = cfg.qa;

  std::vector<Tensor> subset;
  ActivationProfile own_profile;
  const ActivationProfile* profile = nullptr;
  if (needs_profile(cfg)) {
    subset = profiling_subset(exp.data, cfg.profile_samples, cfg.seed);
    if (subset.empty()) throw Error("dataset has no profiling samples");
    if (base_profile == nullptr) {
      own_profile = profile_activations(exp.model, subset);
      base_profile = &own_profile;
    }
    profile = base_profile;
  }

  RunResult result;
  std::vector<Tensor> outputs;
  if (cfg.oracle) {
    const OracleOptions opts{cfg.ocs_ratio, cfg.oracle_batch, 0.99};
    const ActivationProfile oracle_profile = profile_oracle_activations(exp.model, subset, opts);
    result.policy = calibrate(exp.model, policy, &oracle_profile);
    for (std::size_t start = 0; start < evals.size(); start += cfg.oracle_batch) {
      const auto batch = std::span(evals).subspan(start, std::min(cfg.oracle_batch, evals.size() - start));
      const Tensor stacked = oracle_activation_ocs(exp.model, result.policy, batch, opts);
      for (std::size_t i = 0; i < batch.size(); ++i) outputs.push_back(unstack_one(stacked, i));
    }
    // Every batch splits the same number of channels; the first batch's plan
    // stands in for the size accounting.
    const auto first = std::span(evals).subspan(0, std::min(cfg.oracle_batch, evals.size()));
    const ActivationProfile seen = profile_activations(exp.model, first);
    result.plan = plan_splits(exp.model, cfg.ocs_ratio, SplitTarget::activations, false, &seen);
    result.transformed = apply_split_plan(exp.model, result.plan);
  } else {
    if (cfg.ocs_target && cfg.ocs_ratio > 0.0) {
      result.plan = plan_splits(exp.model, cfg.ocs_ratio, *cfg.ocs_target, cfg.qa, profile);
    } else {
      result.plan = SplitPlan{cfg.ocs_ratio, cfg.ocs_target.value_or(SplitTarget::weights), cfg.qa, {}};
    }
    result.transformed = apply_split_plan(exp.model, result.plan);
    ActivationProfile split_profile;
    if (cfg.abits && !result.plan.empty()) {
      split_profile = profile_activations(result.transformed, subset);
      profile = &split_profile;
    }
    result.policy = calibrate(result.transformed, policy, cfg.abits ? profile : nullptr);
    outputs = forward_batch(prepare(result.transformed, result.policy), evals);
  }

  ReportRow& row = result.row;
  row.model = cfg.model_name.empty() ? exp.name : cfg.model_name;
  const bool acts = cfg.focus == Focus::activations;
  row.target = acts ? "activations" : "weights";
  row.bits = (acts ? cfg.abits : cfg.wbits).value_or(32);
  row.clip_method = std::string(to_string(acts ? cfg.clip_a : cfg.clip_w));
  if (cfg.oracle) row.clip_method += "+oracle" + std::to_string(cfg.oracle_batch);
  row.ocs_ratio = cfg.ocs_ratio;
  row.qa = cfg.qa;
  row.accuracy_or_mse = metric(exp, outputs);
  row.rel_weight_size = relative_weight_size(exp.model, result.transformed);
  row.rel_act_size = relative_activation_size(exp.model, result.transformed);
  return result;
}

ReportRow cmd_quantize(const RunConfig& cfg) {
  cfg.validate();
  const Experiment exp = load_experiment(cfg.model_path, cfg.data_path);
  RunResult r = run_quantize(exp, cfg);
  if (cfg.save_model) save_model(r.transformed, *cfg.save_model);
  if (cfg.save_plan) save_split_plan(r.plan, *cfg.save_plan);
  if (cfg.out) save_report(std::span(&r.row, 1), *cfg.out);
  return r.row;
}

double float_metric(const Experiment& exp) {
  const auto evals = eval_inputs(exp.data);
  if (evals.empty()) throw Error("dataset has no evaluation samples");
  std::vector<Tensor> outputs;
  for (const auto& x : evals) outputs.push_back(forward(exp.model, x));
  return metric(exp, outputs);
}

namespace {

RunConfig sweep_config(const SweepConfig& sc, int bits, ClipMethod clip, double ratio) {
  RunConfig c = sc.base;
  const bool acts = sc.target == SplitTarget::activations;
  c.focus = acts ? Focus::activations : Focus::weights;
  (acts ? c.abits : c.wbits) = bits;
  (acts ? c.clip_a : c.clip_w) = clip;
  c.ocs_target = sc.target;
  c.ocs_ratio = ratio;
  return c;
}

// Runs every config on `threads` workers; results keep the input order.
std::vector<ReportRow> run_all(const Experiment& exp, const std::vector<RunConfig>& configs,
                               const ActivationProfile* base, unsigned threads) {
  std::vector<ReportRow> rows(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        rows[i] = run_quantize(exp, configs[i], base).row;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

}  // namespace

std::vector<ReportRow> run_sweep(const Experiment& exp, const SweepConfig& sc) {
  if (sc.bits.empty() || sc.clips.empty() || sc.ratios.empty()) throw UsageError("sweep has an empty range");
  for (double r : sc.ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("OCS ratio must be in [0, 1]");
  }
  const unsigned threads = sc.threads ? sc.threads : std::max(1u, std::thread::hardware_concurrency());

  std::vector<RunConfig> configs;
  for (int b : sc.bits) {
    for (ClipMethod m : sc.clips) {
      for (double r : sc.ratios) configs.push_back(sweep_config(sc, b, m, r));
    }
  }
  for (const auto& c : configs) c.validate();

  ActivationProfile base;
  const ActivationProfile* base_ptr = nullptr;
  if (std::any_of(configs.begin(), configs.end(), needs_profile)) {
    const auto subset = profiling_subset(exp.data, sc.base.profile_samples, sc.base.seed);
    if (subset.empty()) throw Error("dataset has no profiling samples");
    base = profile_activations(exp.model, subset);
    base_ptr = &base;
  }
  std::vector<ReportRow> rows = run_all(exp, configs, base_ptr, threads);
  if (!sc.combined) return rows;

  const bool higher_better = labeled(exp.data);
  const std::size_t per_bits = sc.clips.size() * sc.ratios.size();
  const auto zero = std::find(sc.ratios.begin(), sc.ratios.end(), 0.0);
  std::vector<RunConfig> extra;
  std::vector<std::string> labels;
  for (std::size_t bi = 0; bi < sc.bits.size(); ++bi) {
    // Best clip at ratio 0, or over all ratios when 0 was not swept.
    std::size_t best = 0;
    double best_value = 0.0;
    bool first = true;
    for (std::size_t mi = 0; mi < sc.clips.size(); ++mi) {
      for (std::size_t ri = 0; ri < sc.ratios.size(); ++ri) {
        if (zero != sc.ratios.end() && sc.ratios[ri] != 0.0) continue;
        const double v = rows[bi * per_bits + mi * sc.ratios.size() + ri].accuracy_or_mse;
        if (first || (higher_better ? v > best_value : v < best_value)) {
          best = mi;
          best_value = v;
          first = false;
        }
      }
    }
    for (double r : sc.ratios) {
      if (r == 0.0) continue;
      extra.push_back(sweep_config(sc, sc.bits[bi], sc.clips[best], r));
      labels.push_back("best:" + std::string(to_string(sc.clips[best])));
    }
  }
  // Combined runs repeat a base configuration; reuse those rows.
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const auto& c = extra[i];
    const auto bi = std::find(sc.bits.begin(), sc.bits.end(), sc.target == SplitTarget::activations ? *c.abits : *c.wbits) -
                    sc.bits.begin();
    const auto mi = std::find(sc.clips.begin(), sc.clips.end(),
                              sc.target == SplitTarget::activations ? c.clip_a : c.clip_w) -
                    sc.clips.begin();
    const auto ri = std::find(sc.ratios.begin(), sc.ratios.end(), c.ocs_ratio) - sc.ratios.begin();
    ReportRow row = rows[static_cast<std::size_t>(bi) * per_bits + static_cast<std::size_t>(mi) * sc.ratios.size() +
                         static_cast<std::size_t>(ri)];
    row.clip_method = labels[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string profile_summary(const Experiment& exp, std::size_t samples, std::uint64_t seed, int bits) {
  const auto subset = profiling_subset(exp.data, samples, seed);
  if (subset.empty()) throw Error("dataset has no profiling samples");
  const ActivationProfile p = profile_activations(exp.model, subset);
  std::ostringstream os;
  os << "point,layer,count,max_abs,p99_abs,mse,aciq,kl\n";
  for (const auto& [key, values] : p.points) {
    const Layer& l = exp.model.layer(key);
    std::vector<double> mags(values.size());
    std::transform(values.begin(), values.end(), mags.begin(), [](double v) { return std::abs(v); });
    const double mx = max_abs(values);
    os << key << ',' << (l.name.empty() ? std::string(l.kind()) : l.name) << ',' << values.size() << ',' << fmt(mx)
       << ',' << fmt(percentile(mags, 0.99));
    for (ClipMethod m : {ClipMethod::mse, ClipMethod::aciq, ClipMethod::kl}) {
      os << ',' << (mx > 0.0 ? fmt(choose_threshold(values, m, bits).threshold) : std::string("0"));
    }
    os << '\n';
  }
  return os.str();
}

std::string inspect_model(const ModelGraph& model) {
  const auto shapes = model.infer_shapes();
  std::ostringstream os;
  os << "input " << shape_to_string(model.input_shape()) << '\n';
  std::size_t params = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const Layer& l = model.layers()[i];
    os << l.id << ' ' << l.kind();
    if (!l.name.empty()) os << " '" << l.name << "'";
    os << " -> " << shape_to_string(shapes[i]);
    if (l.is_weighted()) {
      const Tensor& w = l.weight();
      params += w.size() + l.bias().size();
      os << " weight " << shape_to_string(w.shape()) << " max|w| " << fmt(max_abs(w));
      if (!l.weight_splits.empty()) os << " splits " << l.weight_splits.size();
    }
    os << '\n';
  }
  os << "parameters " << params << '\n';
  return os.str();
}

}  // namespace ocsq
