#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fedrough/roughness.hpp"
#include "test_support.hpp"

using namespace fedrough;

namespace {

Profile profile_of(std::vector<double> v, double l) { return Profile{std::move(v), l}; }

double anisotropic(const ParamVector& w) { return w[0] * w[0] + 10.0 * w[1] * w[1]; }

}  // namespace

TEST(SampleDirection, ScalarIsPlusOrMinusOne) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto d = sample_direction(rng, 1);
    EXPECT_EQ(std::abs(d[0]), 1.0);
  }
}

TEST(SampleDirection, UnitNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    EXPECT_NEAR(norm(sample_direction(rng, 1000)), 1.0, 1e-12);
  }
}

TEST(SampleDirection, NormalizingUnitVectorIsIdempotent) {
  Rng rng(4);
  const auto d = sample_direction(rng, 37);
  ParamVector again = d;
  const double n = norm(again);
  for (double& v : again) v /= n;
  for (std::size_t i = 0; i < d.dim(); ++i) EXPECT_NEAR(again[i], d[i], 1e-15);
}

TEST(ProjectProfile, Constant) {
  const auto p = project_profile([](const ParamVector&) { return 2.5; }, ParamVector{1, 2}, ParamVector{0.6, 0.8},
                                 0.01, 7);
  ASSERT_EQ(p.values.size(), 8u);
  for (double v : p.values) EXPECT_EQ(v, 2.5);
}

TEST(ProjectProfile, LinearIsAffineInOffset) {
  const ParamVector c{1.5, -2.0, 0.5};
  const ParamVector w{0.3, 0.1, -0.7};
  Rng rng(8);
  const auto d = sample_direction(rng, 3);
  const double l = 0.01;
  const std::size_t m = 10;
  const auto p = project_profile([&](const ParamVector& x) { return dot(c, x); }, w, d, l, m);
  for (std::size_t j = 0; j <= m; ++j)
    EXPECT_NEAR(p.values[j], dot(c, w) + grid_point(l, m, j) * dot(c, d), 1e-15);
}

TEST(ProjectProfile, SquaredNormGrid) {
  const auto p =
      project_profile([](const ParamVector& x) { return squared_norm(x); }, ParamVector{0, 0}, ParamVector{1, 0}, 0.01, 4);
  const std::vector<double> expected{1e-4, 2.5e-5, 0.0, 2.5e-5, 1e-4};
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(p.values[j], expected[j], 1e-18);
}

TEST(ProjectProfile, CountsExactlyMPlusOneEvaluations) {
  std::size_t calls = 0;
  project_profile([&](const ParamVector&) { return ++calls, 0.0; }, ParamVector{0}, ParamVector{1}, 0.5, 13);
  EXPECT_EQ(calls, 14u);
}

TEST(ProjectProfile, NonFiniteLossNamesOffset) {
  try {
    project_profile([](const ParamVector& x) { return x[0] > 0.0 ? NAN : 1.0; }, ParamVector{0}, ParamVector{1}, 1.0, 2);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.offset(), 1.0);
    EXPECT_NE(std::string(e.what()).find("s=1"), std::string::npos);
  }
}

TEST(TotalVariation, Examples) {
  EXPECT_EQ(total_variation(profile_of({2, 2, 2, 2}, 0.01)), 0.0);
  EXPECT_EQ(total_variation(profile_of({1, 2, 4, 7, 11}, 0.01)), 10.0);
  EXPECT_EQ(total_variation(profile_of({1, 3, 2, 4}, 0.01)), 5.0);
}

TEST(NormalizedTv, MonotoneIsHalfInverseWidth) {
  EXPECT_DOUBLE_EQ(normalized_tv(profile_of({0.1, 0.2, 0.5, 0.9}, 0.01)), 50.0);
  EXPECT_DOUBLE_EQ(normalized_tv(profile_of({3, 1, -4}, 0.01)), 50.0);
}

TEST(NormalizedTv, FlatProfileUsesConvention) {
  EXPECT_EQ(normalized_tv(profile_of({7, 7, 7}, 0.01)), 50.0);
  EXPECT_EQ(normalized_tv(profile_of({1e6, 1e6 + 1e-7, 1e6}, 0.01)), 50.0);
}

TEST(NormalizedTv, SymmetricParabolaIsInverseWidth) {
  // s_j^2 on [-l, l] with even m: TV = 2 l^2, A = l^2 -> T = 1/l.
  const double l = 0.01;
  for (std::size_t m : {2u, 4u, 10u, 20u}) {
    Profile p{{}, l};
    for (std::size_t j = 0; j <= m; ++j) p.values.push_back(grid_point(l, m, j) * grid_point(l, m, j));
    EXPECT_NEAR(normalized_tv(p), 100.0, 1e-9) << "m=" << m;
  }
}

TEST(RoughnessIndex, LinearLossIsZero) {
  const ParamVector c{1, -3, 2, 0.5};
  RoughnessConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto rep = roughness_index([&](const ParamVector& w) { return dot(c, w); }, ParamVector{1, 2, 3, 4}, cfg);
    EXPECT_NEAR(rep.ri_raw, 0.0, 1e-12);
    for (double t : rep.per_direction_T) EXPECT_NEAR(t, 50.0, 1e-9);
  }
}

TEST(RoughnessIndex, IsotropicQuadraticAtOriginIsZero) {
  RoughnessConfig cfg;
  cfg.m = 20;
  cfg.seed = 77;
  const auto rep = roughness_index([](const ParamVector& w) { return squared_norm(w); }, ParamVector(6), cfg);
  EXPECT_NEAR(rep.ri_raw, 0.0, 1e-12);
}

TEST(RoughnessIndex, AnisotropicQuadraticMatchesBruteForce) {
  RoughnessConfig cfg{10, 0.01, 20, 10.0, 2024};
  const ParamVector w{0.05, 0.0};
  const auto rep = roughness_index(anisotropic, w, cfg);
  std::vector<long double> T;
  const long double oracle = test_support::brute_force_ri(anisotropic, w, 10, 0.01, 20, 2024, &T);
  EXPECT_NEAR(rep.ri_raw, static_cast<double>(oracle), 1e-12);
  for (std::size_t i = 0; i < T.size(); ++i) EXPECT_NEAR(rep.per_direction_T[i], static_cast<double>(T[i]), 1e-9);
  // Some directions cross the valley floor inside the window, so the index is non-trivial.
  EXPECT_GT(rep.ri_raw, 0.01);
}

TEST(RoughnessIndex, ScaleInvarianceIsBitwiseForPowerOfTwoScales) {
  const ParamVector w{0.05, -0.002};
  RoughnessConfig cfg{12, 0.01, 19, 10.0, 9};
  const auto base = roughness_index(anisotropic, w, cfg);
  for (double a : {0.25, 2.0, 8.0}) {
    const auto scaled = roughness_index([&](const ParamVector& x) { return a * anisotropic(x); }, w, cfg);
    EXPECT_EQ(scaled.per_direction_T, base.per_direction_T) << "a=" << a;
    EXPECT_EQ(scaled.ri_raw, base.ri_raw);
  }
}

TEST(RoughnessIndex, AffineTransformLeavesIndexUnchanged) {
  const ParamVector w{0.05, -0.002};
  RoughnessConfig cfg{12, 0.01, 19, 10.0, 9};
  const auto base = roughness_index(anisotropic, w, cfg);
  const auto moved = roughness_index([&](const ParamVector& x) { return 3.7 * anisotropic(x) + 0.25; }, w, cfg);
  EXPECT_NEAR(moved.ri_raw, base.ri_raw, 1e-9);
}

TEST(RoughnessIndex, ClippingAtImax) {
  // A profile that is monotone along most directions but oscillates along a
  // few gives a large coefficient of variation.
  const auto spiky = [](const ParamVector& x) { return x[0] + 1e-3 * std::sin(4000.0 * x[1]) * (x[2] > 0 ? 1 : 0); };
  RoughnessConfig cfg{10, 0.01, 40, 0.05, 3};
  const auto rep = roughness_index(spiky, ParamVector{0.0, 0.0, 0.0}, cfg);
  EXPECT_GT(rep.ri_raw, cfg.I_max);
  EXPECT_EQ(rep.ri_clipped, cfg.I_max);
}

TEST(RoughnessIndex, EvaluationCountAndDeterminism) {
  RoughnessConfig cfg{7, 0.02, 11, 10.0, 5};
  std::size_t calls = 0;
  const auto rep = roughness_index([&](const ParamVector& w) { return ++calls, anisotropic(w); }, ParamVector{0.1, 0.2}, cfg);
  EXPECT_EQ(rep.loss_evals, 7u * 12u);
  EXPECT_EQ(calls, 7u * 12u);
  const auto again = roughness_index(anisotropic, ParamVector{0.1, 0.2}, cfg);
  EXPECT_EQ(again.per_direction_T, rep.per_direction_T);
  EXPECT_EQ(again.ri_raw, rep.ri_raw);
}

TEST(RoughnessIndex, RejectsInvalidConfig) {
  auto f = [](const ParamVector&) { return 0.0; };
  EXPECT_THROW(roughness_index(f, ParamVector{0}, RoughnessConfig{1, 0.01, 19, 10, 0}), ContractError);
  EXPECT_THROW(roughness_index(f, ParamVector{0}, RoughnessConfig{10, 0.0, 19, 10, 0}), ContractError);
  EXPECT_THROW(roughness_index(f, ParamVector{0}, RoughnessConfig{10, 0.01, 0, 10, 0}), ContractError);
  EXPECT_THROW(roughness_index(f, ParamVector{0}, RoughnessConfig{10, 0.01, 19, 0, 0}), ContractError);
}

TEST(RoughnessIndex, PropertiesOnRandomQuadratics) {
  Rng gen(31337);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + gen.uniform_index(6);
    std::vector<double> diag(d);
    for (double& v : diag) v = 0.1 + 10.0 * gen.uniform();
    ParamVector w(d);
    for (double& v : w) v = 0.02 * gen.normal();
    auto f = [&](const ParamVector& x) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += diag[i] * x[i] * x[i];
      return s;
    };
    RoughnessConfig cfg{2 + gen.uniform_index(12), 0.01, 1 + gen.uniform_index(30), 0.5 + 5 * gen.uniform(),
                        gen.next_u64()};
    const auto rep = roughness_index(f, w, cfg);
    EXPECT_GE(rep.ri_raw, 0.0);
    EXPECT_LE(rep.ri_clipped, cfg.I_max);
    EXPECT_EQ(rep.ri_clipped, std::min(rep.ri_raw, cfg.I_max));
    EXPECT_EQ(rep.loss_evals, cfg.M * (cfg.m + 1));
    for (double t : rep.per_direction_T) EXPECT_GE(t, 1.0 / (2.0 * cfg.l));
  }
}
