#pragma once

// Synthetic texture-grid denoising data. Each clean image is a 2x2 grid of
// regions; every region is a sinusoidal grating drawn from one of M classes
// (orientation m*pi/M, class-specific frequency). The noisy counterpart adds
// i.i.d. Gaussian noise, unclipped.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "d2sm/error.hpp"
#include "d2sm/kv_file.hpp"
#include "d2sm/tensor.hpp"
#include "d2sm/tensor_io.hpp"

namespace d2sm {

inline constexpr const char* kManifestName = "manifest.txt";

struct DatasetSpec {
  std::size_t count = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t classes = 4;
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  DatasetSpec spec;
  std::vector<std::string> clean_files;  // relative to the dataset directory
  std::vector<std::string> noisy_files;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Image<float>> clean;
  std::vector<Image<float>> noisy;
};

/// Spatial frequency (cycles/pixel) of texture class m.
inline double texture_frequency(std::size_t m) { return 0.06 + 0.05 * static_cast<double>(m); }

/// Per-image generator derived from (seed, index) so images are independent of generation order.
inline std::mt19937_64 image_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Generates one (clean, noisy) pair.
inline std::pair<Image<float>, Image<float>> generate_pair(const DatasetSpec& spec, std::size_t index) {
  auto rng = image_rng(spec.seed, index);
  std::uniform_int_distribution<std::size_t> pick_class(0, spec.classes - 1);
  std::uniform_real_distribution<double> pick_phase(0.0, 2.0 * std::numbers::pi);

  struct Region {
    double cos_t, sin_t, freq, phase;
  };
  std::array<Region, 4> regions{};
  for (auto& r : regions) {
    const std::size_t m = pick_class(rng);
    const double theta = static_cast<double>(m) * std::numbers::pi / static_cast<double>(spec.classes);
    r = {std::cos(theta), std::sin(theta), texture_frequency(m), pick_phase(rng)};
  }

  Image<float> clean(spec.height, spec.width, spec.channels);
  const std::size_t h2 = spec.height / 2, w2 = spec.width / 2;
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      const Region& r = regions[(y >= h2 ? 2 : 0) + (x >= w2 ? 1 : 0)];
      const double t = static_cast<double>(x) * r.cos_t + static_cast<double>(y) * r.sin_t;
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double shift = 2.0 * std::numbers::pi * static_cast<double>(c) / 3.0;
        clean.at(y, x, c) = static_cast<float>(
            0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * r.freq * t + r.phase + shift));
      }
    }

  Image<float> noisy = clean;
  if (spec.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.sigma);
    for (auto& v : noisy.data) v = static_cast<float>(static_cast<double>(v) + noise(rng));
  }
  return {std::move(clean), std::move(noisy)};
}

inline void check_spec(const DatasetSpec& s) {
  detail::require(s.count >= 1, "count must be >= 1");
  detail::require(s.height >= 8 && s.width >= 8, "image height and width must be >= 8");
  detail::require(s.channels >= 1, "channels must be >= 1");
  detail::require(s.classes >= 2, "classes must be >= 2");
  detail::require(s.sigma >= 0.0 && std::isfinite(s.sigma), "sigma must be finite and >= 0");
}

inline KvFile manifest_to_kv(const DatasetManifest& m) {
  KvFile kv;
  kv.set("count", std::to_string(m.spec.count));
  kv.set("height", std::to_string(m.spec.height));
  kv.set("width", std::to_string(m.spec.width));
  kv.set("channels", std::to_string(m.spec.channels));
  kv.set("classes", std::to_string(m.spec.classes));
  kv.set("sigma", format_real(m.spec.sigma));
  kv.set("seed", std::to_string(m.spec.seed));
  auto& files = kv.sections["files"];
  for (std::size_t i = 0; i < m.clean_files.size(); ++i)
    files.push_back(m.clean_files[i] + " " + m.noisy_files[i]);
  return kv;
}

inline DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out) {
  check_spec(spec);
  std::error_code ec;
  std::filesystem::create_directories(out / "clean", ec);
  std::filesystem::create_directories(out / "noisy", ec);
  if (ec) throw IoError("cannot create dataset directory " + out.string() + ": " + ec.message());

  DatasetManifest m{spec, {}, {}};
  for (std::size_t i = 0; i < spec.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.d2tn", i);
    m.clean_files.push_back(std::string("clean/") + name);
    m.noisy_files.push_back(std::string("noisy/") + name);
    auto [clean, noisy] = generate_pair(spec, i);
    write_tensor(clean, out / m.clean_files.back());
    write_tensor(noisy, out / m.noisy_files.back());
  }
  write_kv(manifest_to_kv(m), out / kManifestName);
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const KvFile kv = read_kv(dir / kManifestName);
  DatasetManifest m;
  m.spec.count = parse_number<std::size_t>(kv.get("count"), "count");
  m.spec.height = parse_number<std::size_t>(kv.get("height"), "height");
  m.spec.width = parse_number<std::size_t>(kv.get("width"), "width");
  m.spec.channels = parse_number<std::size_t>(kv.get("channels"), "channels");
  m.spec.classes = parse_number<std::size_t>(kv.get("classes"), "classes");
  m.spec.sigma = parse_number<double>(kv.get("sigma"), "sigma");
  m.spec.seed = parse_number<std::uint64_t>(kv.get("seed"), "seed");
  auto it = kv.sections.find("files");
  if (it == kv.sections.end()) throw FormatError(dir.string() + ": manifest has no [files] section");
  for (const auto& line : it->second) {
    std::istringstream ls(line);
    std::string clean, noisy, extra;
    if (!(ls >> clean >> noisy) || (ls >> extra))
      throw FormatError(dir.string() + ": malformed file line '" + line + "'");
    m.clean_files.push_back(clean);
    m.noisy_files.push_back(noisy);
  }
  if (m.clean_files.size() != m.spec.count)
    throw FormatError(dir.string() + ": manifest lists " + std::to_string(m.clean_files.size()) +
                      " pairs, count is " + std::to_string(m.spec.count));
  return m;
}

/// Reads the manifest and every tensor it lists, checking declared dims.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const auto& s = ds.manifest.spec;
  auto load = [&](const std::string& rel) {
    auto img = image_from_raw<float>(read_tensor(dir / rel));
    if (img.height != s.height || img.width != s.width || img.channels != s.channels)
      throw FormatError((dir / rel).string() + ": dims differ from manifest");
    return img;
  };
  for (std::size_t i = 0; i < s.count; ++i) {
    ds.clean.push_back(load(ds.manifest.clean_files[i]));
    ds.noisy.push_back(load(ds.manifest.noisy_files[i]));
  }
  return ds;
}

}  // namespace d2sm
