#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evp/errors.hpp"
#include "evp/time_encoding.hpp"
#include "fixtures.hpp"

using namespace evp;

TEST(TimeEncoding, SquaredNormIsOneHalf) {
  const TimeEncoderParams p = init_frequencies(172);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) EXPECT_NEAR(encode(p, u(rng)).squaredNorm(), 0.5, 1e-10);
}

TEST(TimeEncoding, ZeroDeltaIsCosineOnes) {
  const TimeEncoderParams p = init_frequencies(8);
  const Vec z = encode(p, 0.0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(z(2 * i), 1.0 / std::sqrt(8.0));
    EXPECT_DOUBLE_EQ(z(2 * i + 1), 0.0);
  }
}

TEST(TimeEncoding, GeometricFrequencies) {
  const TimeEncoderParams p = init_frequencies(4);
  ASSERT_EQ(p.frequencies.size(), 2);
  EXPECT_DOUBLE_EQ(p.frequencies(0), 1.0);
  EXPECT_DOUBLE_EQ(p.frequencies(1), 1.0 / 100.0);
  EXPECT_EQ(p.dim(), 4u);
  const Vec e = encode(p, 2.0);
  EXPECT_DOUBLE_EQ(e(0), std::cos(2.0) / 2.0);
  EXPECT_DOUBLE_EQ(e(1), std::sin(2.0) / 2.0);
  EXPECT_DOUBLE_EQ(e(3), std::sin(0.02) / 2.0);
}

TEST(TimeEncoding, RejectsOddOrZeroDimension) {
  EXPECT_THROW(init_frequencies(7), ConfigError);
  EXPECT_THROW(init_frequencies(0), ConfigError);
  EXPECT_THROW(frequency_scheme_from_string("linear"), ConfigError);
}

TEST(TimeEncoding, RandomSchemeIsSeededAndSorted) {
  const auto a = init_frequencies(16, FrequencyScheme::random, 3);
  const auto b = init_frequencies(16, FrequencyScheme::random, 3);
  const auto c = init_frequencies(16, FrequencyScheme::random, 4);
  EXPECT_TRUE(a.frequencies == b.frequencies);
  EXPECT_FALSE(a.frequencies == c.frequencies);
  for (Eigen::Index i = 1; i < a.frequencies.size(); ++i) EXPECT_GE(a.frequencies(i - 1), a.frequencies(i));
}

TEST(TimeEncoding, EncodeManyMatchesColumns) {
  const TimeEncoderParams p = init_frequencies(6);
  const double ts[3] = {0.5, 2.0, 40.0};
  const Mat m = encode_many(p, ts);
  for (int j = 0; j < 3; ++j) EXPECT_TRUE(m.col(j).isApprox(encode(p, ts[j]), 0.0));
}

TEST(TimeEncoding, FrequencyGradientMatchesFiniteDifferences) {
  ParamSet ps;
  ps.add("omega", init_frequencies(6, FrequencyScheme::random, 1).frequencies);
  const std::vector<double> deltas = {0.3, 1.7, 4.0};
  Mat weights(6, 3);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = std::cos(0.9 * static_cast<double>(i));
  const auto tape_loss = [&](TapeOps& ops) {
    return ops.sum(ops.cmul(ops.time_encode(ops.param(ps, 0), deltas), ops.constant(weights)));
  };
  const auto plain_loss = [&] { return time_encode_value(ps.value(0), deltas).cwiseProduct(weights).sum(); };
  EXPECT_LE(test::gradient_error(ps, tape_loss, plain_loss), 1e-4);
}
