#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "d2sm/error.hpp"

namespace d2sm {

/// H x W x C image, row-major with channels innermost.
template <typename T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, T fill = T(0))
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const {
    return (y * width + x) * channels + c;
  }
  T& at(std::size_t y, std::size_t x, std::size_t c) { return data[index(y, x, c)]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const { return data[index(y, x, c)]; }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(height, width, channels);
    std::transform(data.begin(), data.end(), out.data.begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class Origin { restored, clear };

/// n x d matrix of per-sample feature vectors.
template <typename T>
struct FeatureBatch {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<T> data;
  Origin origin = Origin::restored;

  FeatureBatch() = default;
  FeatureBatch(std::size_t rows, std::size_t cols, Origin o = Origin::restored)
      : n(rows), d(cols), data(rows * cols, T(0)), origin(o) {}

  std::span<T> row(std::size_t i) { return {data.data() + i * d, d}; }
  std::span<const T> row(std::size_t i) const { return {data.data() + i * d, d}; }
  T& operator()(std::size_t i, std::size_t j) { return data[i * d + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * d + j]; }

  template <typename U>
  FeatureBatch<U> cast() const {
    FeatureBatch<U> out(n, d, origin);
    std::transform(data.begin(), data.end(), out.data.begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const FeatureBatch&, const FeatureBatch&) = default;
};

/// Dense square matrix, row-major. Base for the kernel and probability matrices.
template <typename T>
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<T> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size, T fill = T(0)) : n(size), data(size * size, fill) {}

  T& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

template <typename T>
struct KernelMatrix : SquareMatrix<T> {
  using SquareMatrix<T>::SquareMatrix;
  /// Rows whose norm was zero; their kernel entries were set to 0.5.
  std::vector<std::size_t> zero_norm_rows;
};

/// P(i, j) = g_{i|j}: probability that anchor j picks neighbour i. Columns sum to 1.
template <typename T>
struct CondProbMatrix : SquareMatrix<T> {
  using SquareMatrix<T>::SquareMatrix;
};

template <typename Range>
bool all_finite(const Range& r) {
  return std::all_of(std::begin(r), std::end(r), [](auto v) { return std::isfinite(v); });
}

template <typename T>
void validate(const Image<T>& img) {
  detail::require(img.height > 0 && img.width > 0 && img.channels > 0,
                  "image dimensions must be positive");
  detail::require(img.data.size() == img.height * img.width * img.channels,
                  "image data length does not match dimensions");
  detail::require(all_finite(img.data), "image contains non-finite values");
}

template <typename T>
void validate(const FeatureBatch<T>& f) {
  detail::require(f.n > 0 && f.d > 0, "feature batch must be non-empty");
  detail::require(f.data.size() == f.n * f.d, "feature batch data length does not match shape");
  detail::require(all_finite(f.data), "feature batch contains non-finite values");
}

}  // namespace d2sm
