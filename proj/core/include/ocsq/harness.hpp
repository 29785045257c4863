#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ocsq/clip.hpp"
#include "ocsq/graph.hpp"
#include "ocsq/model_io.hpp"
#include "ocsq/nn.hpp"
#include "ocsq/ocs.hpp"
#include "ocsq/profile.hpp"

namespace ocsq {

/// Which part of the network an experiment studies. Decides the report's
/// target, bits and clip_method columns.
enum class Focus { weights, activations };

struct RunConfig {
  std::filesystem::path model_path;
  std::filesystem::path data_path;
  std::optional<int> wbits = 8;  // nullopt keeps weights in float
  std::optional<int> abits = 8;  // nullopt keeps activations in float
  ClipMethod clip_w = ClipMethod::none;
  ClipMethod clip_a = ClipMethod::none;
  std::optional<SplitTarget> ocs_target;
  double ocs_ratio = 0.0;
  bool qa = true;
  std::size_t profile_samples = 512;
  bool oracle = false;
  std::size_t oracle_batch = 1;
  std::uint64_t seed = 0;
  Focus focus = Focus::weights;
  std::string model_name;  // report label; defaults to the model file stem

  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> save_model;
  std::optional<std::filesystem::path> save_plan;

  /// Throws UsageError on invariant violations.
  void validate() const;
};

/// A model and dataset loaded once and shared by many runs.
struct Experiment {
  std::string name;
  ModelGraph model;
  Dataset data;
};

Experiment load_experiment(const std::filesystem::path& model, const std::filesystem::path& data);

/// Seeded subset of the profiling split, at most `count` samples.
std::vector<Tensor> profiling_subset(const Dataset& data, std::size_t count, std::uint64_t seed);
std::vector<Tensor> eval_inputs(const Dataset& data);
std::vector<int> eval_labels(const Dataset& data);

struct RunResult {
  ReportRow row;
  ModelGraph transformed;
  SplitPlan plan;
  QuantPolicy policy;
};

/// Pipeline on a loaded experiment: profile -> plan + apply OCS -> calibrate -> evaluate.
/// `base_profile` may carry a float profile of `exp.model` on the same
/// profiling subset to skip recomputing it.
RunResult run_quantize(const Experiment& exp, const RunConfig& cfg, const ActivationProfile* base_profile = nullptr);

/// Loads, runs and writes whatever outputs `cfg` asks for.
ReportRow cmd_quantize(const RunConfig& cfg);

/// Metric of the unquantized model on the evaluation split (0 MSE when unlabeled).
double float_metric(const Experiment& exp);

struct SweepConfig {
  RunConfig base;
  std::vector<int> bits;
  std::vector<ClipMethod> clips;
  std::vector<double> ratios;
  SplitTarget target = SplitTarget::weights;
  bool combined = true;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Base rows in bits x clips x ratios order, then per bitwidth one
/// "best:<method>" row for every nonzero ratio. The best method is the one
/// with the best metric at ratio 0 (first listed wins ties).
std::vector<ReportRow> run_sweep(const Experiment& exp, const SweepConfig& cfg);

/// Per-point activation statistics and clip thresholds as text.
std::string profile_summary(const Experiment& exp, std::size_t samples, std::uint64_t seed, int bits);

/// Layer table of a model as text.
std::string inspect_model(const ModelGraph& model);

}  // namespace ocsq
