#pragma once

#include <cmath>
#include <limits>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

/// Returned by psnr() when the two images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

template <typename T>
double mse(const Image<T>& a, const Image<T>& b) {
  detail::require(a.same_shape(b), "mse: image dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

/// Peak signal-to-noise ratio in dB; kPsnrIdentical (+inf) when MSE is zero.
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b, double peak = 1.0) {
  detail::require(peak > 0.0, "psnr: peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / m);
}

inline constexpr std::size_t kSsimWindow = 8;
inline constexpr std::size_t kSsimStride = 4;

/// Structural similarity over 8x8 windows at stride 4, population moments,
/// averaged over all windows and channels.
template <typename T>
double ssim(const Image<T>& a, const Image<T>& b, double peak = 1.0) {
  detail::require(a.same_shape(b), "ssim: image dimensions differ");
  detail::require(a.height >= kSsimWindow && a.width >= kSsimWindow,
                  "ssim: image smaller than the 8x8 window");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double count = static_cast<double>(kSsimWindow * kSsimWindow);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t c = 0; c < a.channels; ++c)
    for (std::size_t y0 = 0; y0 + kSsimWindow <= a.height; y0 += kSsimStride)
      for (std::size_t x0 = 0; x0 + kSsimWindow <= a.width; x0 += kSsimStride) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t y = y0; y < y0 + kSsimWindow; ++y)
          for (std::size_t x = x0; x < x0 + kSsimWindow; ++x) {
            const double va = a.at(y, x, c), vb = b.at(y, x, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        const double ma = sa / count, mb = sb / count;
        const double var_a = saa / count - ma * ma;
        const double var_b = sbb / count - mb * mb;
        const double cov = sab / count - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++windows;
      }
  return total / static_cast<double>(windows);
}

}  // namespace d2sm
