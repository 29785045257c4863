#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ocsq/error.hpp"
#include "ocsq/tensor.hpp"

using namespace ocsq;

TEST(Tensor, ShapeAndValues) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t[4], 5.0);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), Error);
  EXPECT_THROW(Tensor({0, 2}, {}), Error);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), Error);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<double>::infinity()}), Error);
  EXPECT_THROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}).reshaped({4}), Error);
}

TEST(Tensor, MaxAbs) {
  EXPECT_EQ(max_abs(Tensor::vector({0.5, -3.0, 2.0})), 3.0);
  EXPECT_THROW(max_abs(std::span<const double>{}), Error);
}

TEST(Tensor, PercentileInterpolates) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 4.0);
  // rank 0.5 * 3 = 1.5 between the sorted values 2 and 3
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
  EXPECT_THROW(percentile(v, 1.5), Error);
  EXPECT_THROW(percentile(std::span<const double>{}, 0.5), Error);
}

TEST(Tensor, StackUnstackRoundTrip) {
  const std::vector<Tensor> items{Tensor({2}, {1, 2}), Tensor({2}, {3, 4}), Tensor({2}, {5, 6})};
  const Tensor s = stack(items);
  EXPECT_EQ(s.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(unstack_one(s, i), items[i]);
  const std::vector<Tensor> mixed{Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3})};
  EXPECT_THROW(stack(mixed), Error);
}
