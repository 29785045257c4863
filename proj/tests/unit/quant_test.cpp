#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ocsq/error.hpp"
#include "ocsq/quant.hpp"

using namespace ocsq;

TEST(MakeGrid, StepFormula) {
  const QuantGrid g3 = make_grid(3, 3.0);
  EXPECT_EQ(g3.step, 1.0);
  EXPECT_EQ(g3.max_level(), 3);
  EXPECT_EQ(g3.level_count(), 7);
  EXPECT_EQ(make_grid(8, 127.0).step, 1.0);
  EXPECT_DOUBLE_EQ(make_grid(4, 1.0).step, 1.0 / 7.0);
}

TEST(MakeGrid, Errors) {
  EXPECT_THROW(make_grid(1, 1.0), Error);
  EXPECT_THROW(make_grid(8, 0.0), Error);
  EXPECT_THROW(make_grid(8, -1.0), Error);
}

TEST(Quantize, Examples) {
  const QuantGrid g = make_grid(3, 3.0);
  const Tensor q = quantize(Tensor::vector({1.5, -3.0, 0.4}), g);
  EXPECT_EQ(q, Tensor::vector({2.0, -3.0, 0.0}));
  EXPECT_EQ(quantize_value(5.0, g), 3.0);
  EXPECT_EQ(quantize_value(-5.0, g), -3.0);
  // floor(x + 1/2): halves go up on both sides of zero
  EXPECT_EQ(quantize_value(-1.5, g), -1.0);
  EXPECT_EQ(quantize_value(-0.5, g), 0.0);
  EXPECT_EQ(quantize_value(0.5, g), 1.0);
  EXPECT_DOUBLE_EQ(quant_mse(Tensor::vector({1.5}), g), 0.25);
}

TEST(Quantize, IdempotentOnGridAndBounded) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int bits : {2, 4, 8, 12}) {
    const QuantGrid g = make_grid(bits, 1.3);
    for (int i = 0; i < 20000; ++i) {
      const double x = u(rng);
      const double q = quantize_value(x, g);
      EXPECT_EQ(quantize_value(q, g), q);
      const double level = q / g.step;
      EXPECT_NEAR(level, std::round(level), 1e-9);
      EXPECT_LE(std::abs(level), static_cast<double>(g.max_level()) + 1e-9);
      if (std::abs(x) <= g.clip) EXPECT_LE(std::abs(x - q), g.step / 2 + 1e-12);
      if (std::abs(x) > g.clip) EXPECT_EQ(std::abs(q), g.max_level() * g.step);
    }
  }
}
