#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "d2sm/divergence.hpp"
#include "d2sm/grad_check.hpp"

namespace d2sm {
namespace {

FeatureBatch<double> rows(std::initializer_list<std::vector<double>> r) {
  FeatureBatch<double> f(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) std::copy(row.begin(), row.end(), f.row(i++).begin());
  return f;
}

TEST(KlDivergence, IdenticalDistributionsGiveZero) {
  std::mt19937_64 rng(1);
  const auto p = cond_prob_matrix(random_features<double>(7, 5, rng));
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-9);
}

TEST(KlDivergence, TwoSamplesAlwaysZero) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto fx = random_features<double>(2, 4, rng), fy = random_features<double>(2, 4, rng);
    EXPECT_EQ(divergence(fx, fy, Variant::kl), 0.0);
  }
}

TEST(KlDivergence, ThreePointWorkedExample) {
  // Frozen from an independent script evaluating kernels, probabilities and the double sum.
  const auto fx = rows({{1, 0}, {0, 1}, {1, 1}});
  const auto fy = rows({{1, 0}, {0, 1}, {1, 0}});
  EXPECT_NEAR(divergence(fx, fy, Variant::kl), 0.096281947906485255, 1e-12);
  EXPECT_NEAR(divergence(fx, fy, Variant::ikl), 0.094799246227981943, 1e-12);
  std::mt19937_64 rng(1);
  EXPECT_THROW(kl_divergence(cond_prob_matrix(fx), cond_prob_matrix(random_features<double>(4, 2, rng))), ValidationError);
}

TEST(DivergenceWithGrad, MinimumAtEqualFeatures) {
  std::mt19937_64 rng(3);
  const auto f = random_features<double>(6, 8, rng);
  const auto r = divergence_with_grad(f, f, Variant::kl, LiveMask::all(6));
  EXPECT_NEAR(r.value, 0.0, 1e-9);
  for (double g : r.grad.data) EXPECT_NEAR(g, 0.0, 1e-9);
}

TEST(DivergenceWithGrad, JsIsMeanOfKlAndIkl) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto fx = random_features<double>(5, 6, rng), fy = random_features<double>(5, 6, rng);
    const auto live = LiveMask::all(5);
    const double kl = divergence_with_grad(fx, fy, Variant::kl, live).value;
    const double ikl = divergence_with_grad(fx, fy, Variant::ikl, live).value;
    const double js = divergence_with_grad(fx, fy, Variant::js, live).value;
    EXPECT_NEAR(js, 0.5 * (kl + ikl), 1e-12);
  }
}

TEST(DivergenceWithGrad, KlFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto fx = random_features<double>(6, 8, rng), fy = random_features<double>(6, 8, rng);
  EXPECT_LE(grad_check_divergence(fx, fy, Variant::kl, Precision::double_).max_rel_err, 1e-5);
}

TEST(DivergenceWithGrad, AllVariantsFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (Variant v : {Variant::kl, Variant::ikl, Variant::js})
    for (int t = 0; t < 20; ++t) {
      const std::size_t n = 3 + rng() % 6, d = 4 + rng() % 13;
      const auto fx = random_features<double>(n, d, rng), fy = random_features<double>(n, d, rng);
      EXPECT_LE(grad_check_divergence(fx, fy, v, Precision::double_).max_rel_err, 1e-5) << to_string(v);
      EXPECT_LE(grad_check_divergence(fx, fy, v, Precision::single).max_rel_err, 1e-3) << to_string(v);
    }
}

TEST(DivergenceWithGrad, ClearSideDimensionMayDiffer) {
  std::mt19937_64 rng(7);
  const auto fx = random_features<double>(5, 16, rng), fy = random_features<double>(5, 3, rng);
  EXPECT_LE(grad_check_divergence(fx, fy, Variant::js, Precision::double_).max_rel_err, 1e-5);
}

TEST(DivergenceWithGrad, HistoricRowsGetExactlyZeroGradient) {
  std::mt19937_64 rng(8);
  const auto fx = random_features<double>(8, 6, rng), fy = random_features<double>(8, 6, rng);
  const auto full = divergence_with_grad(fx, fy, Variant::kl, LiveMask::all(8));
  const auto part = divergence_with_grad(fx, fy, Variant::kl, LiveMask::first(8, 3));
  EXPECT_EQ(part.value, full.value);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t k = 0; k < 6; ++k) {
      if (i < 3)
        EXPECT_EQ(part.grad(i, k), full.grad(i, k));
      else
        EXPECT_EQ(part.grad(i, k), 0.0);
    }
}

TEST(DivergenceWithGrad, ZeroNormAndAntipodalRowsStayFinite) {
  const auto fx = rows({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 1}});
  const auto fy = rows({{1, 1, 0}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}});
  for (Variant v : {Variant::kl, Variant::ikl, Variant::js}) {
    const auto r = divergence_with_grad(fx, fy, v, LiveMask::all(4));
    EXPECT_TRUE(std::isfinite(r.value));
    EXPECT_GE(r.value, -1e-9);
    EXPECT_TRUE(all_finite(r.grad.data));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.grad(0, k), 0.0);
  }
}

TEST(DivergenceWithGrad, Errors) {
  std::mt19937_64 rng(9);
  const auto a = random_features<double>(4, 3, rng), b = random_features<double>(5, 3, rng);
  EXPECT_THROW(divergence_with_grad(a, b, Variant::kl, LiveMask::all(4)), ValidationError);
  EXPECT_THROW(divergence_with_grad(a, a, Variant::kl, LiveMask{std::vector<bool>(4, false)}), ValidationError);
  EXPECT_THROW(divergence_with_grad(a, a, Variant::kl, LiveMask::all(3)), ValidationError);
  EXPECT_THROW(parse_variant("mmd"), ValidationError);
}

TEST(DivergenceProperties, RandomBatches) {
  std::mt19937_64 rng(100);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 10, d = 1 + rng() % 16;
    const auto fx = random_features<double>(n, d, rng), fy = random_features<double>(n, d, rng);
    const double kl = divergence(fx, fy, Variant::kl), ikl = divergence(fx, fy, Variant::ikl),
                 js = divergence(fx, fy, Variant::js);
    EXPECT_GE(kl, -1e-9);
    EXPECT_GE(ikl, -1e-9);
    EXPECT_GE(js, -1e-9);
    EXPECT_NEAR(js, 0.5 * (kl + ikl), 1e-12);
    EXPECT_NEAR(divergence(fy, fx, Variant::js), js, 1e-9);
    for (Variant v : {Variant::kl, Variant::ikl, Variant::js}) EXPECT_LE(std::abs(divergence(fx, fx, v)), 1e-9);

    auto scaled = fx;
    const double c = 0.05 + 20.0 * (rng() % 1000) / 1000.0;
    for (auto& v : scaled.data) v *= c;
    EXPECT_NEAR(divergence(scaled, fy, Variant::kl), kl, 1e-9);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureBatch<double> px(n, d), py(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(fx.row(perm[i]).begin(), fx.row(perm[i]).end(), px.row(i).begin());
      std::copy(fy.row(perm[i]).begin(), fy.row(perm[i]).end(), py.row(i).begin());
    }
    EXPECT_NEAR(divergence(px, py, Variant::kl), kl, 1e-9);
    EXPECT_NEAR(divergence(px, py, Variant::ikl), ikl, 1e-9);
    EXPECT_NEAR(divergence(px, py, Variant::js), js, 1e-9);
  }
}

TEST(PerceptualMse, Examples) {
  std::mt19937_64 rng(10);
  const auto f = random_features<double>(3, 4, rng);
  const auto [zero, zgrad] = perceptual_mse(f, f);
  EXPECT_EQ(zero, 0.0);
  for (double g : zgrad.data) EXPECT_EQ(g, 0.0);

  auto shifted = f;
  for (auto& v : shifted.data) v += 0.5;
  EXPECT_NEAR(perceptual_mse(shifted, f).first, 0.25, 1e-12);

  const auto a = random_features<double>(5, 7, rng), b = random_features<double>(5, 7, rng);
  double direct = 0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 7; ++k) direct += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
  const auto [v, g] = perceptual_mse(a, b);
  EXPECT_NEAR(v, direct / 35.0, 1e-12);
  for (std::size_t e = 0; e < g.data.size(); ++e) EXPECT_NEAR(g.data[e], 2 * (a.data[e] - b.data[e]) / 35.0, 1e-15);
  EXPECT_THROW(perceptual_mse(a, random_features<double>(5, 6, rng)), ValidationError);
}

}  // namespace
}  // namespace d2sm
