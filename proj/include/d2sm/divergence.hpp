#pragma once

// Divergences between the neighbour distributions of restored-side features
// (Fx, probabilities P) and clear-side features (Fy, probabilities Q):
//
//   kl  = sum_{i != j} P(i,j) log(P(i,j) / Q(i,j))
//   ikl = sum_{i != j} Q(i,j) log(Q(i,j) / P(i,j))
//   js  = (kl + ikl) / 2
//
// Sums run over every anchor and every neighbour; probabilities are clamped
// below at 1e-12 inside each log. Gradients are taken w.r.t. Fx only.

#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/kernel_density.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

inline constexpr double kLogClamp = 1e-12;

enum class Variant { kl, ikl, js };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kl: return "kl";
    case Variant::ikl: return "ikl";
    case Variant::js: return "js";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "kl") return Variant::kl;
  if (s == "ikl") return Variant::ikl;
  if (s == "js") return Variant::js;
  throw ValidationError("unknown divergence variant '" + std::string(s) + "' (expected kl|ikl|js)");
}

/// Marks rows that carry gradient (current mini-batch) vs. constant rows (queue history).
struct LiveMask {
  std::vector<bool> live;

  static LiveMask all(std::size_t n) { return {std::vector<bool>(n, true)}; }
  static LiveMask first(std::size_t n, std::size_t count) {
    LiveMask m{std::vector<bool>(n, false)};
    for (std::size_t i = 0; i < count && i < n; ++i) m.live[i] = true;
    return m;
  }
  std::size_t size() const { return live.size(); }
  bool any() const {
    for (bool b : live)
      if (b) return true;
    return false;
  }
};

template <typename T>
struct DivergenceResult {
  T value = 0;
  FeatureBatch<T> grad;  // d value / d Fx; zero rows where not live
  Variant variant = Variant::kl;
};

template <typename T>
T clamped_log(T p) {
  return std::log(std::max(p, T(kLogClamp)));
}

/// sum_{i != j} P log(P / Q), the forward KL from P to Q.
template <typename T>
T kl_divergence(const CondProbMatrix<T>& p, const CondProbMatrix<T>& q) {
  detail::require(p.n == q.n, "kl_divergence: size mismatch");
  T acc = 0;
  for (std::size_t j = 0; j < p.n; ++j)
    for (std::size_t i = 0; i < p.n; ++i) {
      if (i == j) continue;
      acc += p(i, j) * (clamped_log(p(i, j)) - clamped_log(q(i, j)));
    }
  return acc;
}

template <typename T>
T divergence_value(const CondProbMatrix<T>& p, const CondProbMatrix<T>& q, Variant v) {
  switch (v) {
    case Variant::kl: return kl_divergence(p, q);
    case Variant::ikl: return kl_divergence(q, p);
    case Variant::js: return T(0.5) * kl_divergence(p, q) + T(0.5) * kl_divergence(q, p);
  }
  return T(0);
}

/// d value / d P(i,j) for i != j, with Q held constant.
template <typename T>
SquareMatrix<T> divergence_grad_wrt_p(const CondProbMatrix<T>& p, const CondProbMatrix<T>& q, Variant v) {
  const std::size_t n = p.n;
  const T clamp = T(kLogClamp);
  const T w_fwd = v == Variant::ikl ? T(0) : (v == Variant::js ? T(0.5) : T(1));
  const T w_inv = v == Variant::kl ? T(0) : (v == Variant::js ? T(0.5) : T(1));
  SquareMatrix<T> g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const T pij = p(i, j), qij = q(i, j);
      T d = 0;
      if (w_fwd != T(0)) d += w_fwd * (clamped_log(pij) - clamped_log(qij) + (pij > clamp ? T(1) : T(0)));
      if (w_inv != T(0) && pij > clamp) d -= w_inv * qij / pij;
      g(i, j) = d;
    }
  return g;
}

template <typename T>
void check_divergence_inputs(const FeatureBatch<T>& fx, const FeatureBatch<T>& fy) {
  detail::require(fx.n == fy.n, "divergence: restored and clear batches differ in sample count");
  detail::require(fx.n >= 2, "divergence: need at least 2 samples");
  validate(fx);
  validate(fy);
}

template <typename T>
T divergence(const FeatureBatch<T>& fx, const FeatureBatch<T>& fy, Variant v) {
  check_divergence_inputs(fx, fy);
  return divergence_value(cond_prob_matrix(fx), cond_prob_matrix(fy), v);
}

/// Value of the chosen divergence and its exact gradient w.r.t. the live rows of fx.
template <typename T>
DivergenceResult<T> divergence_with_grad(const FeatureBatch<T>& fx, const FeatureBatch<T>& fy, Variant v,
                                         const LiveMask& live) {
  check_divergence_inputs(fx, fy);
  detail::require(live.size() == fx.n, "divergence: live mask length differs from batch size");
  detail::require(live.any(), "divergence: live mask is empty");
  const std::size_t n = fx.n;

  const auto ux = unit_rows(fx);
  const auto cos_x = cosine_matrix(ux);
  const auto kx = kernel_from_cosine(cos_x, std::span<const T>(ux.norm));
  const auto px = cond_prob_matrix(kx);
  const auto py = cond_prob_matrix(fy);

  DivergenceResult<T> r;
  r.variant = v;
  r.value = divergence_value(px, py, v);
  r.grad = FeatureBatch<T>(n, fx.d, fx.origin);

  // Through the column normalisation: dL/dK(a,b) = (G(a,b) - sum_k G(k,b) P(k,b)) / S_b,
  // where S_b = sum_{k != b} max(K(k,b), floor). The floor blocks the gradient.
  const auto g = divergence_grad_wrt_p(px, py, v);
  SquareMatrix<T> dk(n);
  for (std::size_t b = 0; b < n; ++b) {
    T denom = 0, centre = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == b) continue;
      denom += std::max(kx(k, b), T(kKernelFloor));
      centre += g(k, b) * px(k, b);
    }
    for (std::size_t a = 0; a < n; ++a) {
      if (a == b || kx(a, b) <= T(kKernelFloor)) continue;
      dk(a, b) = (g(a, b) - centre) / denom;
    }
  }

  // K(a,b) = (cos(a,b) + 1) / 2 feeds both (a,b) and (b,a);
  // d cos(a,b) / d x_a = (u_b - cos(a,b) u_a) / |x_a|.
  for (std::size_t a = 0; a < n; ++a) {
    if (!live.live[a] || ux.norm[a] == T(0)) continue;
    auto out = r.grad.row(a);
    const auto ua = ux.unit.row(a);
    T self = 0;
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a || ux.norm[b] == T(0)) continue;
      const T coeff = T(0.5) * (dk(a, b) + dk(b, a));
      if (coeff == T(0)) continue;
      const auto ub = ux.unit.row(b);
      for (std::size_t k = 0; k < fx.d; ++k) out[k] += coeff * ub[k];
      self += coeff * cos_x(a, b);
    }
    const T inv_norm = T(1) / ux.norm[a];
    for (std::size_t k = 0; k < fx.d; ++k) out[k] = (out[k] - self * ua[k]) * inv_norm;
  }
  return r;
}

/// Feature-space mean squared error, the perceptual-loss baseline.
template <typename T>
std::pair<T, FeatureBatch<T>> perceptual_mse(const FeatureBatch<T>& fx, const FeatureBatch<T>& fy) {
  detail::require(fx.n == fy.n && fx.d == fy.d, "perceptual_mse: shape mismatch");
  const T count = static_cast<T>(fx.data.size());
  FeatureBatch<T> grad(fx.n, fx.d, fx.origin);
  T acc = 0;
  for (std::size_t i = 0; i < fx.data.size(); ++i) {
    const T diff = fx.data[i] - fy.data[i];
    acc += diff * diff;
    grad.data[i] = T(2) * diff / count;
  }
  return {acc / count, std::move(grad)};
}

}  // namespace d2sm
