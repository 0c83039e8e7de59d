#pragma once

// Binary tensor container ("D2TN"):
//   magic   4 bytes  "D2TN"
//   version u8       1
//   rank    u8
//   dims    rank x u32 little-endian
//   payload prod(dims) x f32 little-endian, row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

inline constexpr std::array<char, 4> kTensorMagic = {'D', '2', 'T', 'N'};
inline constexpr std::uint8_t kTensorVersion = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }
  friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace detail

inline std::vector<char> encode_tensor(const RawTensor& t) {
  if (t.dims.size() > 255) throw ValidationError("tensor rank exceeds 255");
  if (t.values.size() != t.element_count())
    throw ValidationError("tensor payload does not match dims");
  if (!all_finite(t.values)) throw ValidationError("tensor contains non-finite values");

  std::vector<char> out(kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(static_cast<char>(kTensorVersion));
  out.push_back(static_cast<char>(t.dims.size()));
  for (auto d : t.dims) detail::put_u32(out, d);
  out.reserve(out.size() + 4 * t.values.size());
  for (float v : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline RawTensor decode_tensor(const std::vector<char>& bytes, const std::string& source = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 6 || std::memcmp(p, kTensorMagic.data(), 4) != 0)
    throw FormatError(source + ": bad magic, not a D2TN tensor file");
  if (p[4] != kTensorVersion)
    throw FormatError(source + ": unsupported version " + std::to_string(p[4]));

  RawTensor t;
  const std::size_t rank = p[5];
  std::size_t offset = 6;
  if (size < offset + 4 * rank) throw LengthError(source + ": truncated header");
  for (std::size_t i = 0; i < rank; ++i, offset += 4) t.dims.push_back(detail::get_u32(p + offset));

  const std::size_t count = t.element_count();
  if (size - offset != 4 * count)
    throw LengthError(source + ": payload holds " + std::to_string((size - offset) / 4) +
                      " values, header declares " + std::to_string(count));
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += 4)
    t.values[i] = std::bit_cast<float>(detail::get_u32(p + offset));
  return t;
}

inline void write_tensor(const RawTensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline RawTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes, path.string());
}

// Conversions between typed containers and the on-disk representation.

template <typename T>
RawTensor to_raw(const Image<T>& img) {
  validate(img);
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width),
            static_cast<std::uint32_t>(img.channels)};
  t.values.assign(img.data.begin(), img.data.end());
  return t;
}

template <typename T>
RawTensor to_raw(const FeatureBatch<T>& f) {
  validate(f);
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(f.n), static_cast<std::uint32_t>(f.d)};
  t.values.assign(f.data.begin(), f.data.end());
  return t;
}

template <typename T>
RawTensor to_raw(const SquareMatrix<T>& m) {
  RawTensor t;
  t.dims = {static_cast<std::uint32_t>(m.n), static_cast<std::uint32_t>(m.n)};
  t.values.assign(m.data.begin(), m.data.end());
  return t;
}

template <typename T = float>
Image<T> image_from_raw(const RawTensor& t) {
  if (t.dims.size() != 3) throw FormatError("expected a rank-3 image tensor");
  Image<T> img(t.dims[0], t.dims[1], t.dims[2]);
  std::copy(t.values.begin(), t.values.end(), img.data.begin());
  return img;
}

template <typename T = float>
FeatureBatch<T> features_from_raw(const RawTensor& t, Origin origin = Origin::restored) {
  if (t.dims.size() != 2) throw FormatError("expected a rank-2 feature tensor");
  FeatureBatch<T> f(t.dims[0], t.dims[1], origin);
  std::copy(t.values.begin(), t.values.end(), f.data.begin());
  return f;
}

template <typename T>
void write_tensor(const Image<T>& img, const std::filesystem::path& path) {
  write_tensor(to_raw(img), path);
}

template <typename T>
void write_tensor(const FeatureBatch<T>& f, const std::filesystem::path& path) {
  write_tensor(to_raw(f), path);
}

}  // namespace d2sm
