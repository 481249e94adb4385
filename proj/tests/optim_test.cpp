#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nfb/optim.h"
#include "test_support.h"

namespace nfb {
namespace {

// Scalar AdamW written out term by term.
struct ScalarAdamW {
  double m = 0, v = 0;
  int t = 0;
  double adaptive = 0, decay = 0;

  double Step(double theta, double g, double lr, double wd, double b1 = 0.9, double b2 = 0.999,
              double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double m_hat = m / (1 - std::pow(b1, t));
    const double v_hat = v / (1 - std::pow(b2, t));
    adaptive = lr * m_hat / (std::sqrt(v_hat) + eps);
    decay = lr * wd * theta;
    return theta - adaptive - decay;
  }
};

MlpParamsD Scalar(double w, double b) {
  auto p = MlpParamsD::Zeros({1, 1});
  p.weights[0](0, 0) = w;
  p.biases[0][0] = b;
  return p;
}

TEST(AdamW, SingleStepOracle) {
  ScalarAdamW ref;
  const double expected = ref.Step(1.0, 0.5, 1e-3, 1e-2);
  EXPECT_NEAR(ref.adaptive, 9.9999998e-4, 1e-12);
  EXPECT_NEAR(ref.decay, 1e-5, 1e-15);
  EXPECT_NEAR(expected, 0.99899000002, 1e-12);

  auto p = Scalar(1.0, 1.0);
  auto state = InitAdamW(p);
  AdamWStep(p, Scalar(0.5, 0.5), state, 1e-3, 1e-2);
  EXPECT_NEAR(p.weights[0](0, 0), expected, 1e-8);
  EXPECT_NEAR(p.biases[0][0], expected, 1e-8);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(AdamW, TracksScalarReferenceOverManySteps) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  ScalarAdamW ref;
  double theta = 0.7;
  auto p = Scalar(0.7, 0.0);
  auto state = InitAdamW(p);
  for (int t = 0; t < 300; ++t) {
    const double g = n(rng);
    theta = ref.Step(theta, g, 3e-3, 5e-2);
    AdamWStep(p, Scalar(g, 0.0), state, 3e-3, 5e-2);
    ASSERT_NEAR(p.weights[0](0, 0), theta, 1e-12) << t;
  }
}

TEST(AdamW, ZeroGradientNoDecayLeavesParams) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n;
  auto p = MlpParams::Zeros({3, 4, 2});
  for (auto& w : p.weights) for (auto& v : w.values()) v = n(rng);
  const auto before = p;
  auto state = InitAdamW(p);
  AdamWStep(p, GradientBuffer::Zeros({3, 4, 2}), state, 1e-2, 0.0);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(AdamW, ZeroGradientDecayOnly) {
  for (double theta : {1.0, -0.37, 12.5, 3e-7}) {
    auto p = Scalar(theta, theta);
    auto state = InitAdamW(p);
    AdamWStep(p, Scalar(0, 0), state, 1e-3, 1e-2);
    EXPECT_EQ(p.weights[0](0, 0), theta * (1 - 1e-3 * 1e-2));
  }
}

TEST(AdamW, DecayKeepsSign) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5), lr(0, 0.5), wd(0, 1.9);
  for (int t = 0; t < 500; ++t) {
    const double theta = u(rng);
    auto p = Scalar(theta, 0);
    auto state = InitAdamW(p);
    AdamWStep(p, Scalar(0, 0), state, lr(rng), wd(rng));
    EXPECT_GE(p.weights[0](0, 0) * theta, 0.0);
  }
}

TEST(AdamW, ConstantGradientUpdateApproachesLr) {
  const double lr = 1e-3;
  for (double g : {0.5, -2.0, 1e-3}) {
    auto p = Scalar(0, 0);
    auto state = InitAdamW(p);
    for (int t = 0; t < 999; ++t) AdamWStep(p, Scalar(g, g), state, lr, 0.0);
    const double before = p.weights[0](0, 0);
    AdamWStep(p, Scalar(g, g), state, lr, 0.0);
    const double update = p.weights[0](0, 0) - before;
    EXPECT_GE(std::fabs(update), 0.9 * lr);
    EXPECT_LE(std::fabs(update), lr);
    EXPECT_LT(update * g, 0.0);
  }
}

TEST(AdamW, BitDeterministic) {
  auto a = Scalar(0.3, -0.2), b = a;
  auto sa = InitAdamW(a), sb = InitAdamW(b);
  for (int t = 0; t < 10; ++t) {
    AdamWStep(a, Scalar(0.1 * t, -0.05), sa, 1e-3, 1e-2);
    AdamWStep(b, Scalar(0.1 * t, -0.05), sb, 1e-3, 1e-2);
  }
  EXPECT_EQ(a, b);
}

TEST(AdamW, InitIsZeroAndRepeatable) {
  const auto p = MlpParams::Zeros({5, 3});
  const auto s1 = InitAdamW(p), s2 = InitAdamW(p);
  EXPECT_EQ(s1.m, GradientBuffer::Zeros({5, 3}));
  EXPECT_EQ(s1.v, GradientBuffer::Zeros({5, 3}));
  EXPECT_EQ(s1.m, s2.m);
  EXPECT_EQ(s1.step_count, 0u);
}

TEST(AdamW, ShapeMismatch) {
  auto p = MlpParams::Zeros({5, 3});
  auto state = InitAdamW(p);
  EXPECT_NFB_ERROR(AdamWStep(p, GradientBuffer::Zeros({5, 4}), state, 1e-3, 0),
                   ErrorKind::kDimensionMismatch);
}

TEST(OneCycle, Endpoints) {
  const OneCycleSchedule s{1e-3, 1000};
  EXPECT_EQ(OneCycleLr(s, 0), 1e-3 / 25);
  EXPECT_EQ(s.peak_step(), 300u);
  EXPECT_NEAR(OneCycleLr(s, 300), 1e-3, 1e-9);
  EXPECT_NEAR(OneCycleLr(s, 999), 1e-3 / 1e4, 1e-9);
  EXPECT_NFB_ERROR(OneCycleLr(s, 1000), ErrorKind::kOutOfRange);
}

TEST(OneCycle, RandomSchedulesEndpointsAndContinuity) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lr(1e-6, 1e-1), pct(0.05, 0.95), div(2, 100), fin(2, 1e5);
  std::uniform_int_distribution<std::size_t> steps(3, 5000);
  for (int t = 0; t < 50; ++t) {
    const OneCycleSchedule s{lr(rng), steps(rng), pct(rng), div(rng), fin(rng)};
    EXPECT_NEAR(OneCycleLr(s, 0), s.max_lr / s.div_factor, 1e-9);
    EXPECT_NEAR(OneCycleLr(s, s.peak_step()), s.max_lr, 1e-9);
    EXPECT_NEAR(OneCycleLr(s, s.total_steps - 1), s.max_lr / s.final_div_factor, 1e-9);
    const std::size_t peak = s.peak_step();
    const double shortest = static_cast<double>(std::min(peak, s.total_steps - 1 - peak));
    const double bound = s.max_lr * M_PI / (2 * shortest) * (1 + 1e-9);
    for (std::size_t i = 0; i + 1 < s.total_steps; ++i) {
      ASSERT_LE(std::fabs(OneCycleLr(s, i + 1) - OneCycleLr(s, i)), bound);
      ASSERT_LE(OneCycleLr(s, i), s.max_lr * (1 + 1e-12));
    }
  }
}

TEST(OneCycle, TinySchedules) {
  EXPECT_EQ(OneCycleLr({1e-3, 1}, 0), 1e-3 / 25);
  const OneCycleSchedule two{1e-3, 2};
  EXPECT_EQ(OneCycleLr(two, 0), 1e-3 / 25);
  EXPECT_NEAR(OneCycleLr(two, 1), 1e-3, 1e-15);
}

TEST(OneCycle, Validation) {
  EXPECT_NFB_ERROR((OneCycleSchedule{1e-3, 0}.Validate()), ErrorKind::kValidationError);
  EXPECT_NFB_ERROR((OneCycleSchedule{-1.0, 10}.Validate()), ErrorKind::kValidationError);
  EXPECT_NFB_ERROR((OneCycleSchedule{1e-3, 10, 1.0}.Validate()), ErrorKind::kValidationError);
  EXPECT_NO_THROW((OneCycleSchedule{1e-3, 10}.Validate()));
}

}  // namespace
}  // namespace nfb
