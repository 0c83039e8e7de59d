#pragma once

// Central finite-difference verification of divergence gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "d2sm/divergence.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

/// max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, 1e-12)
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0, worst = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
  return worst / std::max(scale, 1e-12);
}

/// Central differences of f around x, perturbing every coordinate by +-h.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

template <typename T>
FeatureBatch<T> random_features(std::size_t n, std::size_t d, std::mt19937_64& rng, Origin origin = Origin::restored) {
  std::normal_distribution<double> dist(0.0, 1.0);
  FeatureBatch<T> f(n, d, origin);
  for (auto& v : f.data) v = static_cast<T>(dist(rng));
  return f;
}

enum class Precision { single, double_ };

inline double grad_check_tolerance(Precision p) { return p == Precision::double_ ? 1e-5 : 1e-3; }

struct GradCheckReport {
  double max_rel_err = 0;
  double value = 0;
};

/// Analytic divergence gradient (at the requested precision) against a
/// double-precision central-difference oracle on the same inputs.
inline GradCheckReport grad_check_divergence(const FeatureBatch<double>& fx, const FeatureBatch<double>& fy,
                                             Variant v, Precision precision, double h = 1e-5) {
  std::vector<double> analytic;
  double value = 0.0;
  FeatureBatch<double> x = fx, y = fy;
  if (precision == Precision::double_) {
    const auto r = divergence_with_grad(x, y, v, LiveMask::all(x.n));
    analytic = r.grad.data;
    value = r.value;
  } else {
    // The oracle sees the float-rounded inputs so both sides differentiate the same point.
    const auto xf = x.cast<float>(), yf = y.cast<float>();
    x = xf.cast<double>();
    y = yf.cast<double>();
    const auto r = divergence_with_grad(xf, yf, v, LiveMask::all(x.n));
    analytic.assign(r.grad.data.begin(), r.grad.data.end());
    value = r.value;
  }
  const auto numeric = central_differences(
      [&](const std::vector<double>& flat) {
        FeatureBatch<double> probe = x;
        probe.data = flat;
        return divergence(probe, y, v);
      },
      x.data, h);
  return {max_relative_error(analytic, numeric), value};
}

}  // namespace d2sm
