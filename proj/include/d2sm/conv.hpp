#pragma once

// Small dense layers over HWC images shared by the feature extractor and the
// denoiser: zero-padded 3x3 convolution, tanh, 2x2 average pooling and global
// average pooling, each with an explicit backward pass.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

template <typename T>
struct Conv3x3 {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<T> weight;  // [ky][kx][ci][co]
  std::vector<T> bias;    // [co]; empty for bias-free layers

  Conv3x3() = default;
  Conv3x3(std::size_t cin, std::size_t cout, bool with_bias)
      : in_channels(cin), out_channels(cout), weight(9 * cin * cout, T(0)),
        bias(with_bias ? cout : 0, T(0)) {}

  std::size_t fan_in() const { return 9 * in_channels; }
  T& w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
    return weight[((ky * 3 + kx) * in_channels + ci) * out_channels + co];
  }
  const T& w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) const {
    return weight[((ky * 3 + kx) * in_channels + ci) * out_channels + co];
  }

  /// Same shape, all zeros: the accumulator for gradients of this layer.
  Conv3x3 zeros_like() const { return Conv3x3(in_channels, out_channels, !bias.empty()); }

  template <typename U>
  Conv3x3<U> cast() const {
    Conv3x3<U> out(in_channels, out_channels, !bias.empty());
    for (std::size_t i = 0; i < weight.size(); ++i) out.weight[i] = static_cast<U>(weight[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) out.bias[i] = static_cast<U>(bias[i]);
    return out;
  }

  friend bool operator==(const Conv3x3&, const Conv3x3&) = default;
};

/// Fills weights with N(0, 1/fan_in) draws, in storage order.
template <typename T>
void init_normal_fan_in(Conv3x3<T>& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(layer.fan_in())));
  for (auto& v : layer.weight) v = static_cast<T>(dist(rng));
}

template <typename T>
Image<T> conv3x3_forward(const Image<T>& in, const Conv3x3<T>& layer) {
  detail::require(in.channels == layer.in_channels, "conv3x3: input channel mismatch");
  const std::size_t H = in.height, W = in.width, Ci = layer.in_channels, Co = layer.out_channels;
  Image<T> out(H, W, Co);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      T* o = &out.data[out.index(y, x, 0)];
      if (!layer.bias.empty())
        for (std::size_t co = 0; co < Co; ++co) o[co] = layer.bias[co];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        if (y + ky < 1 || y + ky - 1 >= H) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          if (x + kx < 1 || x + kx - 1 >= W) continue;
          const T* src = &in.data[in.index(y + ky - 1, x + kx - 1, 0)];
          const T* wk = &layer.weight[(ky * 3 + kx) * Ci * Co];
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const T v = src[ci];
            const T* wrow = wk + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) o[co] += v * wrow[co];
          }
        }
      }
    }
  return out;
}

/// Accumulates dL/dweight (and dL/dbias) into `grad`; returns dL/dinput when
/// `want_input_grad` is set, else an empty image.
template <typename T>
Image<T> conv3x3_backward(const Image<T>& in, const Conv3x3<T>& layer, const Image<T>& dout,
                          Conv3x3<T>* grad, bool want_input_grad) {
  detail::require(dout.height == in.height && dout.width == in.width &&
                      dout.channels == layer.out_channels,
                  "conv3x3 backward: gradient shape mismatch");
  const std::size_t H = in.height, W = in.width, Ci = layer.in_channels, Co = layer.out_channels;
  Image<T> din;
  if (want_input_grad) din = Image<T>(H, W, Ci);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const T* g = &dout.data[dout.index(y, x, 0)];
      if (grad && !grad->bias.empty())
        for (std::size_t co = 0; co < Co; ++co) grad->bias[co] += g[co];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        if (y + ky < 1 || y + ky - 1 >= H) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          if (x + kx < 1 || x + kx - 1 >= W) continue;
          const std::size_t src_off = in.index(y + ky - 1, x + kx - 1, 0);
          const T* src = &in.data[src_off];
          const std::size_t wk = (ky * 3 + kx) * Ci * Co;
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const T* wrow = &layer.weight[wk + ci * Co];
            if (grad) {
              T* grow = &grad->weight[wk + ci * Co];
              const T v = src[ci];
              for (std::size_t co = 0; co < Co; ++co) grow[co] += v * g[co];
            }
            if (want_input_grad) {
              T acc = 0;
              for (std::size_t co = 0; co < Co; ++co) acc += wrow[co] * g[co];
              din.data[src_off + ci] += acc;
            }
          }
        }
      }
    }
  return din;
}

template <typename T>
void tanh_inplace(Image<T>& img) {
  for (auto& v : img.data) v = std::tanh(v);
}

/// dL/dz given dL/dy and y = tanh(z).
template <typename T>
Image<T> tanh_backward(const Image<T>& y, const Image<T>& dy) {
  Image<T> dz(y.height, y.width, y.channels);
  for (std::size_t i = 0; i < y.data.size(); ++i) dz.data[i] = dy.data[i] * (T(1) - y.data[i] * y.data[i]);
  return dz;
}

/// 2x2 average pooling with stride 2; an odd trailing row/column is dropped.
template <typename T>
Image<T> avg_pool2x2(const Image<T>& in) {
  Image<T> out(in.height / 2, in.width / 2, in.channels);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < in.channels; ++c)
        out.at(y, x, c) = T(0.25) * (in.at(2 * y, 2 * x, c) + in.at(2 * y, 2 * x + 1, c) +
                                     in.at(2 * y + 1, 2 * x, c) + in.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

template <typename T>
Image<T> avg_pool2x2_backward(std::size_t in_h, std::size_t in_w, const Image<T>& dout) {
  Image<T> din(in_h, in_w, dout.channels);
  for (std::size_t y = 0; y < dout.height; ++y)
    for (std::size_t x = 0; x < dout.width; ++x)
      for (std::size_t c = 0; c < dout.channels; ++c) {
        const T g = T(0.25) * dout.at(y, x, c);
        din.at(2 * y, 2 * x, c) = g;
        din.at(2 * y, 2 * x + 1, c) = g;
        din.at(2 * y + 1, 2 * x, c) = g;
        din.at(2 * y + 1, 2 * x + 1, c) = g;
      }
  return din;
}

template <typename T>
void global_avg_pool(const Image<T>& in, std::span<T> out) {
  std::fill(out.begin(), out.end(), T(0));
  for (std::size_t p = 0; p < in.height * in.width; ++p)
    for (std::size_t c = 0; c < in.channels; ++c) out[c] += in.data[p * in.channels + c];
  const T scale = T(1) / static_cast<T>(in.height * in.width);
  for (auto& v : out) v *= scale;
}

template <typename T>
Image<T> global_avg_pool_backward(std::size_t h, std::size_t w, std::span<const T> dout) {
  Image<T> din(h, w, dout.size());
  const T scale = T(1) / static_cast<T>(h * w);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < dout.size(); ++c) din.data[p * dout.size() + c] = dout[c] * scale;
  return din;
}

}  // namespace d2sm
