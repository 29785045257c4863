#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "builders.hpp"
#include "ocsq/error.hpp"
#include "ocsq/nn.hpp"
#include "ocsq/ocs.hpp"
#include "ocsq/quant.hpp"
#include "oracles.hpp"

using namespace ocsq;
using namespace ocsq::testing;

// --- value splitting ------------------------------------------------------------

TEST(SplitValue, NaiveHalves) {
  const SplitPair p = split_value_naive(3.0);
  EXPECT_EQ(p.first, 1.5);
  EXPECT_EQ(p.second, 1.5);
}

TEST(SplitValue, NaiveSplitChangesQuantizedSum) {
  // w = 3 on a unit grid: both halves round up to 2.
  const QuantGrid g = make_grid(8, 127.0);
  const SplitPair p = split_value_naive(3.0);
  EXPECT_EQ(quantize_value(p.first, g) + quantize_value(p.second, g), 4.0);
  EXPECT_EQ(quantize_value(3.0, g), 3.0);
}

TEST(SplitValue, QaExample) {
  const SplitPair p = split_value_qa(3.0, 1.0);
  EXPECT_EQ(p.first, 1.25);
  EXPECT_EQ(p.second, 1.75);
  const QuantGrid g = make_grid(8, 127.0);
  EXPECT_EQ(quantize_value(p.first, g) + quantize_value(p.second, g), 3.0);
}

TEST(SplitValue, QaPreservesQuantizedValue) {
  std::mt19937_64 rng(9);
  for (double step : {0.1, 0.37, 1.0, 2.5e-3}) {
    const QuantGrid g = make_grid(8, 127.0 * step);
    std::uniform_real_distribution<double> u(-20.0 * step, 20.0 * step);
    for (int i = 0; i < 20000; ++i) {
      const double w = u(rng);
      const SplitPair p = split_value_qa(w, g.step);
      // compare grid levels; the dequantized sum carries rounding noise
      auto level = [&](double x) { return std::llround(ref_quantize(x, 8, g.clip) / g.step); };
      ASSERT_EQ(level(p.first) + level(p.second), level(w))
          << "w = " << w << " step = " << step;
      EXPECT_DOUBLE_EQ(p.first + p.second, w);
    }
  }
}

TEST(SplitValue, NaiveErrorBoundedByStep) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const QuantGrid g = make_grid(8, 127.0);
  for (int i = 0; i < 20000; ++i) {
    const double w = u(rng);
    const SplitPair p = split_value_naive(w);
    EXPECT_LE(std::abs(quantize_value(p.first, g) + quantize_value(p.second, g) - quantize_value(w, g)), g.step);
  }
}

TEST(SplitValue, QaNeedsPositiveStep) { EXPECT_THROW(split_value_qa(1.0, 0.0), Error); }

// --- weight channel selection ------------------------------------------------------

namespace {

// Replays greedy selection by physically halving and appending columns.
std::vector<std::size_t> replay_weight_selection(const Tensor& w, std::size_t n) {
  const std::size_t out = w.dim(0);
  std::vector<std::vector<double>> cols(w.dim(1));
  const std::size_t inner = w.size() / (out * w.dim(1));
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t c = 0; c < w.dim(1); ++c) {
      for (std::size_t k = 0; k < inner; ++k) cols[c].push_back(w[(o * w.dim(1) + c) * inner + k]);
    }
  }
  std::vector<std::size_t> picks;
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      for (double x : cols[c]) {
        if (std::abs(x) > best_v) {
          best_v = std::abs(x);
          best = c;
        }
      }
    }
    // lowest index among equal maxima
    for (std::size_t c = 0; c < best; ++c) {
      for (double x : cols[c]) {
        if (std::abs(x) == best_v) {
          best = c;
          break;
        }
      }
    }
    for (auto& x : cols[best]) x /= 2.0;
    cols.push_back(cols[best]);
    picks.push_back(best);
  }
  return picks;
}

}  // namespace

TEST(SelectWeightChannels, PicksLargestAndRevisitsCopies) {
  // Column 1 holds an outlier 8x the rest: it and then its copy get picked.
  const Tensor w({2, 3}, {1.0, 8.0, -1.0, 0.5, 0.5, 1.5});
  const auto picks = select_weight_channels(w, 4);
  EXPECT_EQ(picks, (std::vector<std::size_t>{1, 1, 3, 1}));
}

TEST(SelectWeightChannels, TiesGoToLowestIndex) {
  const Tensor w({1, 3}, {2.0, -2.0, 2.0});
  EXPECT_EQ(select_weight_channels(w, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(SelectWeightChannels, MatchesReplay) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor(rng, {6, 9, 3, 3});
    EXPECT_EQ(select_weight_channels(w, 14), replay_weight_selection(w, 14));
  }
}

TEST(SelectWeightChannels, LimitsSplitCount) {
  const Tensor w({1, 2}, {1.0, 2.0});
  EXPECT_NO_THROW(select_weight_channels(w, 20));
  EXPECT_THROW(select_weight_channels(w, 21), Error);
}

// --- activation channel selection ------------------------------------------------

TEST(SelectActivationChannels, RanksByExtremeCounts) {
  ChannelSamples prof(4);
  for (int i = 0; i < 100; ++i) {
    prof[0].push_back(0.1);
    prof[1].push_back(i % 10 == 0 ? 9.0 : 0.1);  // 10 extremes
    prof[2].push_back(0.2);
    prof[3].push_back(i % 25 == 0 ? 9.0 : 0.1);  // 4 extremes
  }
  EXPECT_EQ(select_activation_channels(prof, 2, 0.95), (std::vector<std::size_t>{1, 3}));
  // no counts beyond the cut for channels 0 and 2: stable order keeps 0 first
  EXPECT_EQ(select_activation_channels(prof, 3, 0.95), (std::vector<std::size_t>{1, 3, 0}));
}

TEST(SelectActivationChannels, Errors) {
  EXPECT_THROW(select_activation_channels({}, 1), Error);
  ChannelSamples prof{{1, 2}, {3, 4}};
  EXPECT_THROW(select_activation_channels(prof, 3), Error);
}

// --- planning --------------------------------------------------------------------------

TEST(SplitCount, CeilingOfRatio) {
  EXPECT_EQ(split_count(0.0, 64), 0u);
  EXPECT_EQ(split_count(0.01, 64), 1u);
  EXPECT_EQ(split_count(0.05, 100), 5u);
  EXPECT_EQ(split_count(0.07, 100), 7u);
  EXPECT_EQ(split_count(0.1, 1000), 100u);
  EXPECT_EQ(split_count(0.02, 2048), 41u);
  EXPECT_EQ(split_count(1.0, 16), 16u);
}

TEST(SplittableLayers, SkipsFirstWeightedAndUnreachableProducers) {
  const ModelGraph cnn = random_cnn(1);
  // conv4 is fed through bn/relu/pool; fc8 sits behind a flatten of 2x2 maps;
  // fc10 is fed by fc8 through a relu.
  EXPECT_EQ(splittable_layers(cnn, SplitTarget::weights), (std::vector<int>{4, 10}));
  EXPECT_EQ(splittable_layers(cnn, SplitTarget::activations), (std::vector<int>{4, 8, 10}));
}

TEST(PlanSplits, RecordsPerLayer) {
  const ModelGraph m = random_mlp(3, 16, 24);
  const SplitPlan p = plan_splits(m, 0.1, SplitTarget::weights, true);
  EXPECT_EQ(p.records_for(0).size(), 0u);
  ASSERT_EQ(p.records_for(2).size(), 3u);
  ASSERT_EQ(p.records_for(5).size(), 3u);
  const auto r = p.records_for(2);
  for (std::size_t k = 0; k < r.size(); ++k) EXPECT_EQ(r[k].new_channel, 24 + k);
  EXPECT_EQ(plan_splits(m, 0.0, SplitTarget::weights, true).records.size(), 0u);
}

TEST(PlanSplits, ActivationTargetNeedsMatchingProfile) {
  const ModelGraph m = random_mlp(3);
  EXPECT_THROW(plan_splits(m, 0.1, SplitTarget::activations, false), Error);
  std::mt19937_64 rng(4);
  const auto xs = random_inputs(rng, m.input_shape(), 8);
  const ActivationProfile prof = profile_activations(m, xs);
  EXPECT_FALSE(plan_splits(m, 0.1, SplitTarget::activations, false, &prof).empty());
  const ModelGraph other = random_mlp(3, 16, 12);
  EXPECT_THROW(plan_splits(other, 0.1, SplitTarget::activations, false, &prof), Error);
}

TEST(SplitTargetNames, Parse) {
  EXPECT_EQ(parse_split_target("weights"), SplitTarget::weights);
  EXPECT_EQ(parse_split_target("acts"), SplitTarget::activations);
  EXPECT_THROW(parse_split_target("both"), UsageError);
}
