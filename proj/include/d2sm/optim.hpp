#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

/// Mean absolute error over every element of the batch, with its subgradient
/// sign(pred - target) / count (sign(0) = 0).
template <typename T>
std::pair<T, std::vector<Image<T>>> l1_loss(std::span<const Image<T>> pred, std::span<const Image<T>> target) {
  detail::require(pred.size() == target.size() && !pred.empty(), "l1_loss: batch size mismatch");
  std::size_t count = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    detail::require(pred[b].same_shape(target[b]), "l1_loss: image shape mismatch");
    count += pred[b].size();
  }
  const double inv = 1.0 / static_cast<double>(count);
  double acc = 0.0;
  std::vector<Image<T>> grad;
  grad.reserve(pred.size());
  for (std::size_t b = 0; b < pred.size(); ++b) {
    Image<T> g(pred[b].height, pred[b].width, pred[b].channels);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double d = static_cast<double>(pred[b].data[i]) - static_cast<double>(target[b].data[i]);
      acc += std::abs(d);
      g.data[i] = static_cast<T>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
    }
    grad.push_back(std::move(g));
  }
  return {static_cast<T>(acc * inv), std::move(grad)};
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update applied in place to every parameter tensor.
template <typename T>
void adam_step(std::span<std::vector<T>* const> params, std::span<const std::vector<T>* const> grads,
               AdamState<T>& state, const AdamConfig& cfg) {
  detail::require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  detail::require(state.m.size() == params.size(), "adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto& g = *grads[k];
    detail::require(p.size() == g.size() && p.size() == state.m[k].size(), "adam_step: tensor shape mismatch");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      p[i] = static_cast<T>(p[i] - update);
    }
  }
}

}  // namespace d2sm
