#include <gtest/gtest.h>

#include <random>

#include "d2sm/patch_sampler.hpp"
#include "test_util.hpp"

namespace d2sm {
namespace {

std::size_t expected_count(std::size_t h, std::size_t w, std::size_t k, std::size_t s) {
  return ((h - k) / s + 1) * ((w - k) / s + 1);
}

TEST(PatchGrid, CountExamples) {
  EXPECT_EQ(patch_grid(32, 32, {16, 8}).count(), 9u);
  EXPECT_EQ(patch_grid(32, 32, {32, 8}).count(), 1u);
  EXPECT_EQ(patch_grid(512, 512, {224, 56}).count(), 36u);
}

TEST(PatchGrid, CountSweep) {
  for (std::size_t h = 4; h <= 40; h += 3)
    for (std::size_t w = 4; w <= 40; w += 5)
      for (std::size_t k = 1; k <= std::min(h, w); k += 2)
        for (std::size_t s = 1; s <= k; s += 2) {
          const auto g = patch_grid(h, w, {k, s});
          EXPECT_EQ(g.count(), expected_count(h, w, k, s));
          EXPECT_EQ(g.origins.front(), (std::pair<std::size_t, std::size_t>{0, 0}));
          EXPECT_LE(g.origins.back().first + k, h);
          EXPECT_LE(g.origins.back().second + k, w);
        }
}

TEST(PatchGrid, Errors) {
  EXPECT_THROW(patch_grid(32, 32, {16, 17}), ValidationError);
  EXPECT_THROW(patch_grid(32, 32, {33, 8}), ValidationError);
  EXPECT_THROW(patch_grid(32, 10, {16, 8}), ValidationError);
  EXPECT_THROW(patch_grid(32, 32, {16, 0}), ValidationError);
}

TEST(ExtractPatches, SubTensorsAreBitExact) {
  std::mt19937_64 rng(1);
  const auto img = testing::random_image<float>(20, 23, 3, rng);
  const auto g = patch_grid(20, 23, {7, 3});
  const auto patches = extract_patches(img, g);
  ASSERT_EQ(patches.size(), g.count());
  for (std::size_t m = 0; m < g.count(); ++m) {
    const auto [r0, c0] = g.origins[m];
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 7; ++x)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(patches[m].at(y, x, c), img.at(r0 + y, c0 + x, c));
  }
}

TEST(ExtractPatches, TilingReconstructsImage) {
  std::mt19937_64 rng(2);
  const auto img = testing::random_image<float>(24, 16, 2, rng);
  const auto g = patch_grid(24, 16, {8, 8});
  const auto patches = extract_patches(img, g);
  Image<float> rebuilt(24, 16, 2);
  scatter_patch_grads(patches, g, rebuilt);
  EXPECT_EQ(rebuilt, img);
}

TEST(ExtractPatches, PlantedMarkerLandsInEveryCoveringPatch) {
  Image<float> img(32, 32, 1);
  img.at(12, 20, 0) = 7.0f;
  const auto g = patch_grid(32, 32, {16, 8});
  const auto patches = extract_patches(img, g);
  std::size_t hits = 0;
  for (std::size_t m = 0; m < g.count(); ++m) {
    const auto [r0, c0] = g.origins[m];
    const bool covers = r0 <= 12 && 12 < r0 + 16 && c0 <= 20 && 20 < c0 + 16;
    if (covers) {
      EXPECT_EQ(patches[m].at(12 - r0, 20 - c0, 0), 7.0f);
      ++hits;
    }
  }
  EXPECT_EQ(hits, 4u);
}

TEST(ScatterPatchGrads, OverlapsSum) {
  const auto g = patch_grid(32, 32, {16, 8});
  std::vector<Image<double>> ones(g.count(), Image<double>(16, 16, 1));
  for (auto& p : ones) std::fill(p.data.begin(), p.data.end(), 1.0);
  Image<double> out(32, 32, 1);
  scatter_patch_grads(ones, g, out);
  EXPECT_EQ(out.at(0, 0, 0), 1.0);
  EXPECT_EQ(out.at(8, 0, 0), 2.0);
  EXPECT_EQ(out.at(8, 8, 0), 4.0);
  EXPECT_EQ(out.at(16, 16, 0), 4.0);
  EXPECT_EQ(out.at(31, 31, 0), 1.0);
  std::vector<Image<double>> too_few(1, Image<double>(16, 16, 1));
  EXPECT_THROW(scatter_patch_grads(too_few, g, out), ValidationError);
}

}  // namespace
}  // namespace d2sm
