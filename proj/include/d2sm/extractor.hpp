#pragma once

// Frozen, seeded semantic feature map:
//   (x - 0.5) -> conv3x3(C->8) -> tanh -> avgpool2x2 -> conv3x3(8->16) -> tanh -> global avg pool
// Maps each image to a 16-dimensional feature vector. Weights never train.
//
// The input is centred on mid-gray first. Without it the constant image level
// dominates every feature and all cosine similarities collapse towards 1.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "d2sm/conv.hpp"
#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

inline constexpr std::size_t kExtractorHidden = 8;
inline constexpr std::size_t kFeatureDim = 16;
inline constexpr double kExtractorInputMean = 0.5;

template <typename T>
struct ExtractorWeights {
  std::uint64_t seed = 0;
  Conv3x3<T> conv1;
  Conv3x3<T> conv2;

  std::size_t channels() const { return conv1.in_channels; }

  template <typename U>
  ExtractorWeights<U> cast() const {
    return {seed, conv1.template cast<U>(), conv2.template cast<U>()};
  }
  friend bool operator==(const ExtractorWeights&, const ExtractorWeights&) = default;
};

/// Draws both layers from one mt19937_64(seed) stream, conv1 first; values are
/// drawn in double and rounded to T so every precision sees the same weights.
template <typename T = float>
ExtractorWeights<T> init_extractor(std::uint64_t seed, std::size_t channels = 1) {
  detail::require(channels >= 1, "init_extractor: channels must be >= 1");
  std::mt19937_64 rng(seed);
  Conv3x3<double> c1(channels, kExtractorHidden, false), c2(kExtractorHidden, kFeatureDim, false);
  init_normal_fan_in(c1, rng);
  init_normal_fan_in(c2, rng);
  return {seed, c1.template cast<T>(), c2.template cast<T>()};
}

/// Intermediate activations of one image, kept for the backward pass.
template <typename T>
struct ExtractorTrace {
  Image<T> input;  // centred image
  Image<T> act1;   // tanh(conv1(input))
  Image<T> pool;   // avgpool(act1)
  Image<T> act2;   // tanh(conv2(pool))
};

template <typename T>
ExtractorTrace<T> extractor_trace(const ExtractorWeights<T>& w, const Image<T>& img, std::span<T> feature) {
  detail::require(img.channels == w.channels(), "extract_features: channel mismatch");
  detail::require(img.height >= 4 && img.width >= 4, "extract_features: image smaller than 4x4");
  ExtractorTrace<T> t;
  t.input = img;
  for (auto& v : t.input.data) v -= T(kExtractorInputMean);
  t.act1 = conv3x3_forward(t.input, w.conv1);
  tanh_inplace(t.act1);
  t.pool = avg_pool2x2(t.act1);
  t.act2 = conv3x3_forward(t.pool, w.conv2);
  tanh_inplace(t.act2);
  global_avg_pool(t.act2, feature);
  return t;
}

template <typename T>
void check_batch(std::span<const Image<T>> batch) {
  detail::require(!batch.empty(), "extract_features: empty batch");
  for (const auto& img : batch)
    detail::require(img.same_shape(batch.front()), "extract_features: images differ in shape");
}

template <typename T>
FeatureBatch<T> extract_features(const ExtractorWeights<T>& w, std::span<const Image<T>> batch,
                                 Origin origin = Origin::restored) {
  check_batch(batch);
  FeatureBatch<T> f(batch.size(), kFeatureDim, origin);
  for (std::size_t i = 0; i < batch.size(); ++i) extractor_trace(w, batch[i], f.row(i));
  return f;
}

/// Forward pass that also returns the per-image traces for extract_backward.
template <typename T>
FeatureBatch<T> extract_features(const ExtractorWeights<T>& w, std::span<const Image<T>> batch,
                                 std::vector<ExtractorTrace<T>>& traces, Origin origin = Origin::restored) {
  check_batch(batch);
  FeatureBatch<T> f(batch.size(), kFeatureDim, origin);
  traces.clear();
  traces.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) traces.push_back(extractor_trace(w, batch[i], f.row(i)));
  return f;
}

template <typename T>
Image<T> extract_backward_one(const ExtractorWeights<T>& w, const ExtractorTrace<T>& t,
                              std::span<const T> dfeature) {
  auto d_act2 = global_avg_pool_backward<T>(t.act2.height, t.act2.width, dfeature);
  auto d_z2 = tanh_backward(t.act2, d_act2);
  auto d_pool = conv3x3_backward(t.pool, w.conv2, d_z2, static_cast<Conv3x3<T>*>(nullptr), true);
  auto d_act1 = avg_pool2x2_backward(t.act1.height, t.act1.width, d_pool);
  auto d_z1 = tanh_backward(t.act1, d_act1);
  return conv3x3_backward(t.input, w.conv1, d_z1, static_cast<Conv3x3<T>*>(nullptr), true);
}

/// dL/dimage for each traced image, given dL/dfeatures (n x 16).
template <typename T>
std::vector<Image<T>> extract_backward(const ExtractorWeights<T>& w, const std::vector<ExtractorTrace<T>>& traces,
                                       const FeatureBatch<T>& dfeatures) {
  detail::require(dfeatures.n == traces.size() && dfeatures.d == kFeatureDim,
                  "extract_backward: gradient shape does not match the batch");
  std::vector<Image<T>> grads;
  grads.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i)
    grads.push_back(extract_backward_one(w, traces[i], dfeatures.row(i)));
  return grads;
}

/// Stateless form: re-runs the forward pass, then backpropagates.
template <typename T>
std::vector<Image<T>> extract_backward(const ExtractorWeights<T>& w, std::span<const Image<T>> batch,
                                       const FeatureBatch<T>& dfeatures) {
  std::vector<ExtractorTrace<T>> traces;
  extract_features(w, batch, traces);
  return extract_backward(w, traces, dfeatures);
}

}  // namespace d2sm
