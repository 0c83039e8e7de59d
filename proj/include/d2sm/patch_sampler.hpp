#pragma once

// Sliding-window patch extraction. Windows start at multiples of the stride;
// pixels beyond the last full window on the bottom/right are not covered.

#include <utility>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

struct PatchSpec {
  std::size_t size = 16;   // window K
  std::size_t stride = 8;  // s
};

struct PatchGrid {
  std::size_t window = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // (row, col), row-major

  std::size_t count() const { return origins.size(); }
};

inline PatchGrid patch_grid(std::size_t height, std::size_t width, PatchSpec spec) {
  detail::require(spec.size >= 1 && spec.stride >= 1, "patch_grid: window and stride must be >= 1");
  detail::require(spec.stride <= spec.size, "patch_grid: stride larger than window");
  detail::require(spec.size <= height && spec.size <= width, "patch_grid: window larger than image");
  PatchGrid g;
  g.window = spec.size;
  g.rows = (height - spec.size) / spec.stride + 1;
  g.cols = (width - spec.size) / spec.stride + 1;
  g.origins.reserve(g.rows * g.cols);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) g.origins.emplace_back(r * spec.stride, c * spec.stride);
  return g;
}

template <typename T>
std::vector<Image<T>> extract_patches(const Image<T>& img, const PatchGrid& grid) {
  const std::size_t k = grid.window;
  std::vector<Image<T>> patches;
  patches.reserve(grid.count());
  for (const auto& [r0, c0] : grid.origins) {
    detail::require(r0 + k <= img.height && c0 + k <= img.width, "extract_patches: grid does not fit image");
    Image<T> p(k, k, img.channels);
    for (std::size_t y = 0; y < k; ++y) {
      const T* src = &img.data[img.index(r0 + y, c0, 0)];
      std::copy(src, src + k * img.channels, &p.data[p.index(y, 0, 0)]);
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

/// Adds each patch gradient back into an image-shaped gradient (overlaps sum).
template <typename T>
void scatter_patch_grads(const std::vector<Image<T>>& patch_grads, const PatchGrid& grid, Image<T>& out) {
  detail::require(patch_grads.size() == grid.count(), "scatter_patch_grads: count mismatch");
  const std::size_t k = grid.window;
  for (std::size_t m = 0; m < grid.count(); ++m) {
    const auto [r0, c0] = grid.origins[m];
    const auto& g = patch_grads[m];
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t c = 0; c < out.channels; ++c) out.at(r0 + y, c0 + x, c) += g.at(y, x, c);
  }
}

}  // namespace d2sm
