#pragma once

// Residual denoiser: y = x - conv3(tanh(conv2(tanh(conv1(x))))), all 3x3 zero-padded.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "d2sm/conv.hpp"
#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

inline constexpr std::size_t kDenoiserHidden = 16;

template <typename T>
struct DenoiserWeights {
  Conv3x3<T> conv1;
  Conv3x3<T> conv2;
  Conv3x3<T> conv3;

  std::size_t channels() const { return conv1.in_channels; }

  /// Parameter tensors in a fixed order: conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b.
  std::array<std::vector<T>*, 6> tensors() {
    return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias, &conv3.weight, &conv3.bias};
  }
  std::array<const std::vector<T>*, 6> tensors() const {
    return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias, &conv3.weight, &conv3.bias};
  }

  DenoiserWeights zeros_like() const { return {conv1.zeros_like(), conv2.zeros_like(), conv3.zeros_like()}; }

  template <typename U>
  DenoiserWeights<U> cast() const {
    return {conv1.template cast<U>(), conv2.template cast<U>(), conv3.template cast<U>()};
  }
  friend bool operator==(const DenoiserWeights&, const DenoiserWeights&) = default;
};

inline constexpr const char* kDenoiserTensorNames[6] = {"conv1.weight", "conv1.bias", "conv2.weight",
                                                         "conv2.bias",   "conv3.weight", "conv3.bias"};

/// All-zero weights: the denoiser is the identity map.
template <typename T = float>
DenoiserWeights<T> zero_denoiser(std::size_t channels) {
  detail::require(channels >= 1, "denoiser: channels must be >= 1");
  return {Conv3x3<T>(channels, kDenoiserHidden, true), Conv3x3<T>(kDenoiserHidden, kDenoiserHidden, true),
          Conv3x3<T>(kDenoiserHidden, channels, true)};
}

/// N(0, 1/fan_in) kernels drawn from mt19937_64(seed) in layer order; zero biases.
template <typename T = float>
DenoiserWeights<T> init_denoiser(std::uint64_t seed, std::size_t channels) {
  auto w = zero_denoiser<double>(channels);
  std::mt19937_64 rng(seed);
  init_normal_fan_in(w.conv1, rng);
  init_normal_fan_in(w.conv2, rng);
  init_normal_fan_in(w.conv3, rng);
  return w.template cast<T>();
}

template <typename T>
struct DenoiserTrace {
  Image<T> input;
  Image<T> act1;
  Image<T> act2;
};

template <typename T>
Image<T> denoise_one(const DenoiserWeights<T>& w, const Image<T>& x, DenoiserTrace<T>* trace = nullptr) {
  detail::require(x.channels == w.channels(), "denoise: channel mismatch");
  auto a1 = conv3x3_forward(x, w.conv1);
  tanh_inplace(a1);
  auto a2 = conv3x3_forward(a1, w.conv2);
  tanh_inplace(a2);
  const auto residual = conv3x3_forward(a2, w.conv3);
  Image<T> out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= residual.data[i];
  if (trace) *trace = {x, std::move(a1), std::move(a2)};
  return out;
}

template <typename T>
std::vector<Image<T>> denoise_forward(const DenoiserWeights<T>& w, std::span<const Image<T>> noisy,
                                      std::vector<DenoiserTrace<T>>* traces = nullptr) {
  std::vector<Image<T>> out;
  out.reserve(noisy.size());
  if (traces) traces->assign(noisy.size(), {});
  for (std::size_t i = 0; i < noisy.size(); ++i)
    out.push_back(denoise_one(w, noisy[i], traces ? &(*traces)[i] : nullptr));
  return out;
}

/// Weight gradients for a traced batch, summed over the batch items.
template <typename T>
DenoiserWeights<T> denoise_backward(const DenoiserWeights<T>& w, const std::vector<DenoiserTrace<T>>& traces,
                                    std::span<const Image<T>> dout) {
  detail::require(traces.size() == dout.size(), "denoise_backward: batch size mismatch");
  auto grad = w.zeros_like();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    detail::require(dout[i].same_shape(t.input), "denoise_backward: gradient shape mismatch");
    // out = x - conv3(a2)
    Image<T> d_res = dout[i];
    for (auto& v : d_res.data) v = -v;
    auto d_a2 = conv3x3_backward(t.act2, w.conv3, d_res, &grad.conv3, true);
    auto d_z2 = tanh_backward(t.act2, d_a2);
    auto d_a1 = conv3x3_backward(t.act1, w.conv2, d_z2, &grad.conv2, true);
    auto d_z1 = tanh_backward(t.act1, d_a1);
    conv3x3_backward(t.input, w.conv1, d_z1, &grad.conv1, false);
  }
  return grad;
}

}  // namespace d2sm
