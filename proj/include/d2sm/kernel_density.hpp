#pragma once

// Kernel-density neighbour probabilities in feature space.
//
//   K(a, b)  = (a.b / (|a||b|) + 1) / 2                       in [0, 1]
//   g_{i|j}  = K(f_i, f_j) / sum_{k != j} K(f_k, f_j)          (i != j)
//
// CondProbMatrix stores g_{i|j} at (i, j): column j is the neighbour
// distribution of anchor j.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

/// Floor applied to kernel values before normalisation.
inline constexpr double kKernelFloor = 1e-12;

/// Kernel value assigned to any pair involving a zero-norm vector.
inline constexpr double kZeroNormKernel = 0.5;

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

template <typename T>
T cosine_kernel(std::span<const T> a, std::span<const T> b) {
  detail::require(a.size() == b.size(), "cosine_kernel: dimension mismatch");
  const T na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == T(0) || nb == T(0)) return T(kZeroNormKernel);
  const T c = std::clamp(dot(a, b) / (na * nb), T(-1), T(1));
  return T(0.5) * (c + T(1));
}

/// Row norms and unit rows of a feature batch; zero rows stay zero.
template <typename T>
struct UnitRows {
  std::vector<T> norm;
  FeatureBatch<T> unit;
};

template <typename T>
UnitRows<T> unit_rows(const FeatureBatch<T>& f) {
  UnitRows<T> u{std::vector<T>(f.n), FeatureBatch<T>(f.n, f.d, f.origin)};
  for (std::size_t i = 0; i < f.n; ++i) {
    const auto r = f.row(i);
    u.norm[i] = std::sqrt(dot(r, r));
    if (u.norm[i] == T(0)) continue;
    auto out = u.unit.row(i);
    for (std::size_t k = 0; k < f.d; ++k) out[k] = r[k] / u.norm[i];
  }
  return u;
}

/// Cosine similarities between unit rows; upper triangle computed, then mirrored.
template <typename T>
SquareMatrix<T> cosine_matrix(const UnitRows<T>& u) {
  const std::size_t n = u.norm.size();
  SquareMatrix<T> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c(i, i) = u.norm[i] == T(0) ? T(0) : T(1);
    for (std::size_t j = i + 1; j < n; ++j) {
      T v = 0;
      if (u.norm[i] != T(0) && u.norm[j] != T(0))
        v = std::clamp(dot(u.unit.row(i), u.unit.row(j)), T(-1), T(1));
      c(i, j) = c(j, i) = v;
    }
  }
  return c;
}

template <typename T>
KernelMatrix<T> kernel_from_cosine(const SquareMatrix<T>& cos, std::span<const T> norms) {
  KernelMatrix<T> k(cos.n);
  for (std::size_t i = 0; i < cos.n; ++i)
    if (norms[i] == T(0)) k.zero_norm_rows.push_back(i);
  for (std::size_t i = 0; i < cos.n; ++i)
    for (std::size_t j = 0; j < cos.n; ++j)
      k(i, j) = (norms[i] == T(0) || norms[j] == T(0)) ? T(kZeroNormKernel) : T(0.5) * (cos(i, j) + T(1));
  return k;
}

template <typename T>
KernelMatrix<T> kernel_matrix(const FeatureBatch<T>& f) {
  detail::require(f.n >= 2, "kernel_matrix: need at least 2 samples");
  const auto u = unit_rows(f);
  return kernel_from_cosine(cosine_matrix(u), std::span<const T>(u.norm));
}

template <typename T>
CondProbMatrix<T> cond_prob_matrix(const SquareMatrix<T>& k) {
  detail::require(k.n >= 2, "cond_prob_matrix: need at least 2 samples");
  const std::size_t n = k.n;
  CondProbMatrix<T> p(n);
  for (std::size_t j = 0; j < n; ++j) {
    T denom = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != j) denom += std::max(k(i, j), T(kKernelFloor));
    for (std::size_t i = 0; i < n; ++i)
      p(i, j) = i == j ? T(0) : std::max(k(i, j), T(kKernelFloor)) / denom;
  }
  return p;
}

template <typename T>
CondProbMatrix<T> cond_prob_matrix(const FeatureBatch<T>& f) {
  return cond_prob_matrix(kernel_matrix(f));
}

}  // namespace d2sm
