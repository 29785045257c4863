#include <gtest/gtest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "builders.hpp"
#include "ocsq/error.hpp"
#include "ocsq/harness.hpp"

using namespace ocsq;
using namespace ocsq::testing;

namespace {

const Experiment& experiment(const char* name) {
  static std::map<std::string, Experiment> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const std::string stem(name);
    it = cache.emplace(stem, load_experiment(fixture((stem + ".qnt").c_str()), fixture((stem + "_data.qnt").c_str())))
             .first;
  }
  return it->second;
}

double metadata_number(const char* file, const char* key) {
  return nlohmann::json::parse(read_metadata(fixture(file))).at(key).get<double>();
}

RunConfig weights_config(int bits, ClipMethod clip) {
  RunConfig c;
  c.wbits = bits;
  c.abits = std::nullopt;
  c.clip_w = clip;
  return c;
}

}  // namespace

TEST(RunConfig, ValidateRejectsBadValues) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.wbits = 1;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.abits = 17;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.ocs_ratio = 1.5;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.profile_samples = 0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.oracle = true;
  EXPECT_THROW(bad.validate(), UsageError);
  bad.ocs_target = SplitTarget::activations;
  EXPECT_NO_THROW(bad.validate());
  bad.oracle_batch = 0;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Harness, ProfilingAndEvaluationSplitsAreDisjoint) {
  const Experiment& e = experiment("outlier");
  const auto prof = e.data.indices(SplitRole::profile);
  const auto eval = e.data.indices(SplitRole::eval);
  std::set<std::size_t> seen(prof.begin(), prof.end());
  for (auto i : eval) EXPECT_FALSE(seen.count(i));
  // the subset draws only profiling samples
  const auto subset = profiling_subset(e.data, 100, 7);
  ASSERT_EQ(subset.size(), 100u);
  for (const auto& t : subset) {
    const bool from_eval = std::any_of(eval.begin(), eval.end(), [&](std::size_t i) { return e.data.inputs[i] == t; });
    EXPECT_FALSE(from_eval);
  }
  EXPECT_EQ(profiling_subset(e.data, 100, 7), subset);
  EXPECT_NE(profiling_subset(e.data, 100, 8), subset);
  EXPECT_EQ(profiling_subset(e.data, 5000, 1).size(), prof.size());
}

TEST(Harness, EightBitCnnMatchesFloatAccuracy) {
  const Experiment& e = experiment("cnn");
  const double reference = metadata_number("cnn.qnt", "float_accuracy");
  EXPECT_NEAR(float_metric(e), reference, 1e-9);
  const RunResult r = run_quantize(e, weights_config(8, ClipMethod::none));
  EXPECT_NEAR(r.row.accuracy_or_mse, reference, 0.5);
  EXPECT_EQ(r.row.target, "weights");
  EXPECT_EQ(r.row.bits, 8);
  EXPECT_EQ(r.row.rel_weight_size, 1.0);
  EXPECT_EQ(r.row.rel_act_size, 1.0);
}

TEST(Harness, WeightSplitGrowsWeightsByRatio) {
  const Experiment& e = experiment("outlier");
  auto c = weights_config(6, ClipMethod::none);
  c.ocs_target = SplitTarget::weights;
  c.ocs_ratio = 0.05;
  const RunResult r = run_quantize(e, c);
  // fc2 and fc3 each take ceil(0.05 * 128) = 7 new input channels; fc1 only
  // gains verbatim row copies, which are not stored
  const double expect = (128.0 * 64 + 128.0 * 135 + 10.0 * 135) / (128.0 * 64 + 128.0 * 128 + 10.0 * 128);
  EXPECT_NEAR(r.row.rel_weight_size, expect, 1e-12);
  EXPECT_EQ(r.plan.records.size(), 14u);
  EXPECT_TRUE(r.row.qa);
}

TEST(Harness, MseClipHelpsAtFourBits) {
  const Experiment& e = experiment("outlier");
  const double none = run_quantize(e, weights_config(4, ClipMethod::none)).row.accuracy_or_mse;
  const double mse = run_quantize(e, weights_config(4, ClipMethod::mse)).row.accuracy_or_mse;
  EXPECT_GE(mse, none);
}

TEST(Harness, UnlabeledDataReportsOutputMse) {
  const Experiment& e = experiment("oracle");
  ASSERT_TRUE(e.data.labels.empty());
  EXPECT_EQ(float_metric(e), 0.0);
  RunConfig c;
  c.wbits = std::nullopt;
  c.abits = 4;
  c.focus = Focus::activations;
  const RunResult r = run_quantize(e, c);
  EXPECT_GT(r.row.accuracy_or_mse, 0.0);
  EXPECT_EQ(r.row.target, "activations");
  EXPECT_EQ(r.row.bits, 4);
}

TEST(Harness, OracleRowIsLabelled) {
  const Experiment& e = experiment("oracle");
  RunConfig c;
  c.wbits = std::nullopt;
  c.abits = 6;
  c.focus = Focus::activations;
  c.ocs_target = SplitTarget::activations;
  c.ocs_ratio = 0.05;
  c.oracle = true;
  c.oracle_batch = 4;
  const RunResult r = run_quantize(e, c);
  EXPECT_EQ(r.row.clip_method, "none+oracle4");
  EXPECT_GT(r.row.rel_act_size, 1.0);
}

TEST(Sweep, RowLayoutAndCombinedRows) {
  const Experiment& e = experiment("mlp");
  SweepConfig s;
  s.base = weights_config(8, ClipMethod::none);
  s.bits = {8, 6, 4};
  s.clips = {ClipMethod::none, ClipMethod::mse, ClipMethod::aciq, ClipMethod::kl};
  s.ratios = {0.0, 0.05, 0.1, 0.2};
  s.threads = 1;
  const auto rows = run_sweep(e, s);
  ASSERT_EQ(rows.size(), 48u + 3u * 3u);
  const char* names[] = {"none", "mse", "aciq", "kl"};
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t k = 0; k < 4; ++k) {
        const ReportRow& row = rows[(b * 4 + m) * 4 + k];
        EXPECT_EQ(row.bits, s.bits[b]);
        EXPECT_EQ(row.clip_method, names[m]);
        EXPECT_EQ(row.ocs_ratio, s.ratios[k]);
      }
    }
    // best method at ratio 0, highest accuracy, first listed on ties
    std::size_t best = 0;
    for (std::size_t m = 1; m < 4; ++m) {
      if (rows[(b * 4 + m) * 4].accuracy_or_mse > rows[(b * 4 + best) * 4].accuracy_or_mse) best = m;
    }
    for (std::size_t k = 1; k < 4; ++k) {
      const ReportRow& combined = rows[48 + b * 3 + (k - 1)];
      const ReportRow& source = rows[(b * 4 + best) * 4 + k];
      EXPECT_EQ(combined.clip_method, std::string("best:") + names[best]);
      EXPECT_EQ(combined.bits, s.bits[b]);
      EXPECT_EQ(combined.ocs_ratio, s.ratios[k]);
      EXPECT_EQ(combined.accuracy_or_mse, source.accuracy_or_mse);
      EXPECT_EQ(combined.rel_weight_size, source.rel_weight_size);
    }
  }
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
  const Experiment& e = experiment("mlp");
  SweepConfig s;
  s.base = weights_config(6, ClipMethod::none);
  s.bits = {6, 5};
  s.clips = {ClipMethod::none, ClipMethod::aciq};
  s.ratios = {0.0, 0.1};
  s.threads = 1;
  const std::string one = format_report(run_sweep(e, s));
  s.threads = 3;
  EXPECT_EQ(format_report(run_sweep(e, s)), one);
  s.combined = false;
  EXPECT_EQ(run_sweep(e, s).size(), 8u);
}

TEST(Sweep, ActivationTargetUsesActivationColumns) {
  const Experiment& e = experiment("mlp");
  SweepConfig s;
  s.base.wbits = std::nullopt;
  s.base.focus = Focus::activations;
  s.target = SplitTarget::activations;
  s.bits = {6};
  s.clips = {ClipMethod::none, ClipMethod::mse};
  s.ratios = {0.0, 0.1};
  s.threads = 1;
  const auto rows = run_sweep(e, s);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) EXPECT_EQ(r.target, "activations");
  EXPECT_EQ(rows[0].rel_act_size, 1.0);
  EXPECT_GT(rows[1].rel_act_size, 1.0);
  // the consumer of a split channel gets a copied weight column
  EXPECT_GT(rows[1].rel_weight_size, 1.0);
}

TEST(Harness, ProfileSummaryListsEveryPoint) {
  const Experiment& e = experiment("cnn");
  const std::string text = profile_summary(e, 32, 0, 8);
  EXPECT_EQ(text.rfind("point,layer,count,max_abs,p99_abs,mse,aciq,kl\n", 0), 0u);
  const auto lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(static_cast<std::size_t>(lines), activation_points(e.model).size() + 1);
}

TEST(Harness, InputShapeMismatchIsReported) {
  EXPECT_THROW(load_experiment(fixture("cnn.qnt"), fixture("oracle_data.qnt")), Error);
}
