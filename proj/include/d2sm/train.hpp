#pragma once

// Desk-scale denoising harness: a residual conv denoiser trained with L1 plus
// an optional feature-space objective (neighbour-distribution divergence or
// perceptual MSE), evaluated by PSNR/SSIM and by the KL between restored and
// clean feature distributions.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "d2sm/dataset.hpp"
#include "d2sm/denoiser.hpp"
#include "d2sm/divergence.hpp"
#include "d2sm/error.hpp"
#include "d2sm/extractor.hpp"
#include "d2sm/kv_file.hpp"
#include "d2sm/memory_queue.hpp"
#include "d2sm/metrics.hpp"
#include "d2sm/optim.hpp"
#include "d2sm/patch_sampler.hpp"
#include "d2sm/tensor_io.hpp"

namespace d2sm {

/// Where divergence samples come from: whole images of a mini-batch, or the
/// sliding-window patches of a single image.
enum class SampleMode { batch, patch };

/// Feature-space term added to the pixel loss.
enum class Objective { d2sm, perceptual, none };

inline std::string_view to_string(SampleMode m) { return m == SampleMode::batch ? "batch" : "patch"; }
inline SampleMode parse_mode(std::string_view s) {
  if (s == "batch") return SampleMode::batch;
  if (s == "patch") return SampleMode::patch;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected batch|patch)");
}

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::d2sm: return "d2sm";
    case Objective::perceptual: return "perceptual";
    case Objective::none: return "none";
  }
  return "?";
}
inline Objective parse_objective(std::string_view s) {
  if (s == "d2sm") return Objective::d2sm;
  if (s == "perceptual") return Objective::perceptual;
  if (s == "none") return Objective::none;
  throw ValidationError("unknown objective '" + std::string(s) + "' (expected d2sm|perceptual|none)");
}

struct TrainConfig {
  std::filesystem::path dataset;
  std::filesystem::path eval_dataset;  // empty: no held-out evaluation
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double w_pixel = 1.0;
  double lambda = 0.1;
  Objective objective = Objective::d2sm;
  Variant variant = Variant::kl;
  SampleMode mode = SampleMode::patch;
  PatchSpec patch{16, 8};
  std::size_t queue_size = 64;
  bool use_queue = false;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_model = 0;
  std::uint64_t seed_extractor = 0;
  std::size_t eval_every = 0;  // 0: evaluate only before the first and after the last step
  std::filesystem::path out_dir;
};

inline void validate(const TrainConfig& c) {
  detail::require(c.batch_size >= 1, "batch_size must be >= 1");
  detail::require(c.mode == SampleMode::patch || c.batch_size >= 2, "batch mode needs batch_size >= 2");
  detail::require(c.lambda >= 0.0 && c.w_pixel >= 0.0, "lambda and w_pixel must be >= 0");
  detail::require(c.lambda > 0.0 || c.w_pixel > 0.0, "lambda and w_pixel cannot both be zero");
  detail::require(c.lr > 0.0, "lr must be positive");
  detail::require(!c.use_queue || c.queue_size >= 2, "queue_size must be >= 2");
  detail::require(!c.use_queue || c.mode == SampleMode::patch || c.queue_size >= c.batch_size,
                  "queue_size must be >= batch_size");
}

inline TrainConfig config_from_kv(const KvFile& kv) {
  static const std::vector<std::string> known = {
      "dataset",  "eval_dataset", "epochs",     "max_steps",  "batch_size", "lr",        "beta1",
      "beta2",    "adam_eps",     "w_pixel",    "lambda",     "objective",  "variant",   "mode",
      "patch_size", "stride",     "queue_size", "use_queue",  "seed_data",  "seed_model", "seed_extractor",
      "eval_every", "out_dir"};
  for (const auto& [k, v] : kv.entries)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw FormatError("unknown config key '" + k + "'");

  TrainConfig c;
  auto str = [&](const char* k, auto& field) {
    if (auto v = kv.find(k)) field = *v;
  };
  auto num = [&]<typename N>(const char* k, N& field) {
    if (auto v = kv.find(k)) field = parse_number<N>(*v, k);
  };
  str("dataset", c.dataset);
  str("eval_dataset", c.eval_dataset);
  str("out_dir", c.out_dir);
  num("epochs", c.epochs);
  num("max_steps", c.max_steps);
  num("batch_size", c.batch_size);
  num("lr", c.lr);
  num("beta1", c.beta1);
  num("beta2", c.beta2);
  num("adam_eps", c.adam_eps);
  num("w_pixel", c.w_pixel);
  num("lambda", c.lambda);
  num("patch_size", c.patch.size);
  num("stride", c.patch.stride);
  num("queue_size", c.queue_size);
  num("seed_data", c.seed_data);
  num("seed_model", c.seed_model);
  num("seed_extractor", c.seed_extractor);
  num("eval_every", c.eval_every);
  if (auto v = kv.find("objective")) c.objective = parse_objective(*v);
  if (auto v = kv.find("variant")) c.variant = parse_variant(*v);
  if (auto v = kv.find("mode")) c.mode = parse_mode(*v);
  if (auto v = kv.find("use_queue")) c.use_queue = parse_bool(*v, "use_queue");
  validate(c);
  return c;
}

inline TrainConfig read_config(const std::filesystem::path& path) { return config_from_kv(read_kv(path)); }

inline KvFile config_to_kv(const TrainConfig& c) {
  KvFile kv;
  kv.set("dataset", c.dataset.string());
  kv.set("eval_dataset", c.eval_dataset.string());
  kv.set("epochs", std::to_string(c.epochs));
  kv.set("max_steps", std::to_string(c.max_steps));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("lr", format_real(c.lr));
  kv.set("beta1", format_real(c.beta1));
  kv.set("beta2", format_real(c.beta2));
  kv.set("adam_eps", format_real(c.adam_eps));
  kv.set("w_pixel", format_real(c.w_pixel));
  kv.set("lambda", format_real(c.lambda));
  kv.set("objective", std::string(to_string(c.objective)));
  kv.set("variant", std::string(to_string(c.variant)));
  kv.set("mode", std::string(to_string(c.mode)));
  kv.set("patch_size", std::to_string(c.patch.size));
  kv.set("stride", std::to_string(c.patch.stride));
  kv.set("queue_size", std::to_string(c.queue_size));
  kv.set("use_queue", c.use_queue ? "true" : "false");
  kv.set("seed_data", std::to_string(c.seed_data));
  kv.set("seed_model", std::to_string(c.seed_model));
  kv.set("seed_extractor", std::to_string(c.seed_extractor));
  kv.set("eval_every", std::to_string(c.eval_every));
  kv.set("out_dir", c.out_dir.string());
  return kv;
}

struct EvalRecord {
  double psnr = 0;        // mean over the split, dB; +inf if any image is reproduced exactly
  double ssim = 0;        // mean over the split
  double feature_kl = 0;  // nats
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct MetricsRecord {
  std::size_t step = 0;
  double pixel_loss = 0;
  double d2sm_loss = 0;  // monitored divergence value, logged for every objective
  double total_loss = 0;
  EvalRecord eval;       // most recent held-out evaluation
};

inline constexpr const char* kMetricsHeader = "step,pixel_loss,d2sm_loss,total_loss,psnr,ssim,feature_kl";

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + format_metric(r.pixel_loss) + "," + format_metric(r.d2sm_loss) + "," +
           format_metric(r.total_loss) + "," + format_metric(r.eval.psnr) + "," + format_metric(r.eval.ssim) +
           "," + format_metric(r.eval.feature_kl) + "\n";
  return out;
}

/// KL between restored and clean feature distributions. Patch mode: mean over
/// images of the per-image KL over its patch grid. Batch mode: one KL over the
/// whole-image features of the split.
template <typename T>
double feature_kl(const ExtractorWeights<T>& ext, std::span<const Image<T>> restored,
                  std::span<const Image<T>> clean, SampleMode mode, PatchSpec patch) {
  detail::require(restored.size() == clean.size() && !restored.empty(), "feature_kl: split is empty or misaligned");
  if (mode == SampleMode::batch) {
    detail::require(restored.size() >= 2, "feature_kl: batch mode needs at least 2 images");
    const auto fx = extract_features(ext, restored, Origin::restored);
    const auto fy = extract_features(ext, clean, Origin::clear);
    return static_cast<double>(divergence(fx, fy, Variant::kl));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < restored.size(); ++i) {
    const auto grid = patch_grid(restored[i].height, restored[i].width, patch);
    detail::require(grid.count() >= 2, "feature_kl: patch grid yields fewer than 2 patches");
    const auto px = extract_patches(restored[i], grid);
    const auto py = extract_patches(clean[i], grid);
    const auto fx = extract_features(ext, std::span<const Image<T>>(px), Origin::restored);
    const auto fy = extract_features(ext, std::span<const Image<T>>(py), Origin::clear);
    acc += static_cast<double>(divergence(fx, fy, Variant::kl));
  }
  return acc / static_cast<double>(restored.size());
}

template <typename T>
EvalRecord evaluate(const DenoiserWeights<T>& w, const ExtractorWeights<T>& ext, const Dataset& split,
                    SampleMode mode, PatchSpec patch) {
  detail::require(!split.noisy.empty(), "evaluate: empty split");
  std::vector<Image<T>> noisy, clean;
  for (std::size_t i = 0; i < split.noisy.size(); ++i) {
    noisy.push_back(split.noisy[i].template cast<T>());
    clean.push_back(split.clean[i].template cast<T>());
  }
  const auto restored = denoise_forward(w, std::span<const Image<T>>(noisy));
  EvalRecord r;
  std::vector<Image<double>> restored64, clean64;
  for (std::size_t i = 0; i < restored.size(); ++i) {
    r.psnr += psnr(restored[i], clean[i]);
    r.ssim += ssim(restored[i], clean[i]);
    restored64.push_back(restored[i].template cast<double>());
    clean64.push_back(clean[i].template cast<double>());
  }
  r.psnr /= static_cast<double>(restored.size());
  r.ssim /= static_cast<double>(restored.size());
  // Feature statistics are always measured at double precision.
  r.feature_kl = feature_kl(ext.template cast<double>(), std::span<const Image<double>>(restored64),
                            std::span<const Image<double>>(clean64), mode, patch);
  return r;
}

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  DenoiserWeights<float> weights;
  KvFile meta;  // channels, step, seed_extractor, mode, patch_size, stride
};

inline void save_checkpoint(const std::filesystem::path& dir, const DenoiserWeights<float>& w, const KvFile& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  const auto tensors = w.tensors();
  const Conv3x3<float>* layers[3] = {&w.conv1, &w.conv2, &w.conv3};
  KvFile kv = meta;
  kv.set("channels", std::to_string(w.channels()));
  auto& files = kv.sections["tensors"];
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto* layer = layers[k / 2];
    RawTensor t;
    if (k % 2 == 0)
      t.dims = {3, 3, static_cast<std::uint32_t>(layer->in_channels), static_cast<std::uint32_t>(layer->out_channels)};
    else
      t.dims = {static_cast<std::uint32_t>(layer->out_channels)};
    t.values = *tensors[k];
    const std::string name = std::string(kDenoiserTensorNames[k]) + ".d2tn";
    write_tensor(t, dir / name);
    files.push_back(name);
  }
  write_kv(kv, dir / kManifestName);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck;
  ck.meta = read_kv(dir / kManifestName);
  const auto channels = parse_number<std::size_t>(ck.meta.get("channels"), "channels");
  ck.weights = zero_denoiser<float>(channels);
  auto tensors = ck.weights.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto t = read_tensor(dir / (std::string(kDenoiserTensorNames[k]) + ".d2tn"));
    if (t.values.size() != tensors[k]->size())
      throw FormatError(dir.string() + ": tensor " + kDenoiserTensorNames[k] + " has the wrong size");
    *tensors[k] = t.values;
  }
  ck.meta.sections.erase("tensors");
  return ck;
}

// --- training ---------------------------------------------------------------

struct TrainResult {
  DenoiserWeights<float> weights;
  std::vector<MetricsRecord> metrics;
  EvalRecord final_eval;
};

namespace detail {

/// Loss contribution and restored-feature gradient of the feature-space term.
struct FeatureTerm {
  double divergence = 0;  // monitored divergence value
  double objective = 0;   // value actually optimised (divergence or perceptual MSE)
  FeatureBatch<float> grad;
};

inline FeatureTerm feature_term(const FeatureBatch<float>& fx, const FeatureBatch<float>& fy,
                                const TrainConfig& cfg, FeatureQueuePair<float>* queue, bool need_grad) {
  FeatureTerm t;
  if (queue) {
    queue->enqueue(fx, fy);
    const auto snap = queue->snapshot();
    auto r = divergence_with_grad(snap.x, snap.y, cfg.variant, snap.live);
    t.divergence = r.value;
    t.grad = FeatureBatch<float>(fx.n, fx.d);
    std::copy_n(r.grad.data.begin(), fx.n * fx.d, t.grad.data.begin());
  } else if (need_grad && cfg.objective == Objective::d2sm) {
    auto r = divergence_with_grad(fx, fy, cfg.variant, LiveMask::all(fx.n));
    t.divergence = r.value;
    t.grad = std::move(r.grad);
  } else {
    t.divergence = divergence(fx, fy, cfg.variant);
  }
  if (cfg.objective == Objective::d2sm) {
    t.objective = t.divergence;
  } else if (cfg.objective == Objective::perceptual) {
    auto [v, g] = perceptual_mse(fx, fy);
    t.objective = v;
    t.grad = std::move(g);
  }
  return t;
}

}  // namespace detail

/// Trains on in-memory splits. `eval_split` may be null.
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_split, const Dataset* eval_split) {
  validate(cfg);
  const auto& spec = train_split.manifest.spec;
  detail::require(train_split.noisy.size() >= cfg.batch_size, "train: dataset smaller than one batch");
  if (cfg.mode == SampleMode::patch)
    detail::require(patch_grid(spec.height, spec.width, cfg.patch).count() >= 2,
                    "train: patch grid yields fewer than 2 patches");

  TrainResult res;
  res.weights = init_denoiser<float>(cfg.seed_model, spec.channels);
  const auto ext = init_extractor<float>(cfg.seed_extractor, spec.channels);
  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  AdamState<float> state;
  std::optional<FeatureQueuePair<float>> queue;
  if (cfg.use_queue) queue.emplace(cfg.queue_size, kFeatureDim);

  const bool feature_grad = cfg.objective != Objective::none && cfg.lambda > 0.0;
  const std::size_t per_epoch = train_split.noisy.size() / cfg.batch_size;
  std::size_t total_steps = cfg.epochs * per_epoch;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

  EvalRecord last_eval;
  auto run_eval = [&] {
    if (eval_split) last_eval = evaluate(res.weights, ext, *eval_split, cfg.mode, cfg.patch);
  };
  run_eval();

  std::mt19937_64 order_rng(cfg.seed_data);
  std::vector<std::size_t> order(train_split.noisy.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t b = 0; b < per_epoch && step < total_steps; ++b) {
      std::vector<Image<float>> noisy, clean;
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        noisy.push_back(train_split.noisy[order[b * cfg.batch_size + k]]);
        clean.push_back(train_split.clean[order[b * cfg.batch_size + k]]);
      }
      std::vector<DenoiserTrace<float>> traces;
      auto restored = denoise_forward(res.weights, std::span<const Image<float>>(noisy), &traces);
      auto [pixel, dout] = l1_loss(std::span<const Image<float>>(restored), std::span<const Image<float>>(clean));
      for (auto& g : dout)
        for (auto& v : g.data) v *= static_cast<float>(cfg.w_pixel);

      double div_value = 0.0, feat_objective = 0.0;
      FeatureQueuePair<float>* q = queue ? &*queue : nullptr;
      if (cfg.mode == SampleMode::batch) {
        std::vector<ExtractorTrace<float>> etraces;
        const auto fx = extract_features(ext, std::span<const Image<float>>(restored), etraces, Origin::restored);
        const auto fy = extract_features(ext, std::span<const Image<float>>(clean), Origin::clear);
        auto term = detail::feature_term(fx, fy, cfg, q, feature_grad);
        div_value = term.divergence;
        feat_objective = term.objective;
        if (feature_grad) {
          for (auto& v : term.grad.data) v *= static_cast<float>(cfg.lambda);
          const auto dimg = extract_backward(ext, etraces, term.grad);
          for (std::size_t i = 0; i < dout.size(); ++i)
            for (std::size_t e = 0; e < dout[i].data.size(); ++e) dout[i].data[e] += dimg[i].data[e];
        }
      } else {
        const auto grid = patch_grid(spec.height, spec.width, cfg.patch);
        const float scale = static_cast<float>(cfg.lambda / static_cast<double>(cfg.batch_size));
        for (std::size_t i = 0; i < restored.size(); ++i) {
          const auto pr = extract_patches(restored[i], grid);
          const auto pc = extract_patches(clean[i], grid);
          std::vector<ExtractorTrace<float>> etraces;
          const auto fx = extract_features(ext, std::span<const Image<float>>(pr), etraces, Origin::restored);
          const auto fy = extract_features(ext, std::span<const Image<float>>(pc), Origin::clear);
          auto term = detail::feature_term(fx, fy, cfg, q, feature_grad);
          div_value += term.divergence / static_cast<double>(cfg.batch_size);
          feat_objective += term.objective / static_cast<double>(cfg.batch_size);
          if (feature_grad) {
            for (auto& v : term.grad.data) v *= scale;
            scatter_patch_grads(extract_backward(ext, etraces, term.grad), grid, dout[i]);
          }
        }
      }

      const auto grads = denoise_backward(res.weights, traces, std::span<const Image<float>>(dout));
      auto params = res.weights.tensors();
      const auto gts = grads.tensors();
      adam_step<float>(params, gts, state, adam);
      ++step;

      if (step == total_steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0)) run_eval();
      MetricsRecord m;
      m.step = step;
      m.pixel_loss = pixel;
      m.d2sm_loss = div_value;
      m.total_loss = cfg.w_pixel * pixel + (cfg.objective == Objective::none ? 0.0 : cfg.lambda * feat_objective);
      m.eval = last_eval;
      for (double v : {m.pixel_loss, m.d2sm_loss, m.total_loss})
        if (!std::isfinite(v)) throw Error("train: non-finite loss at step " + std::to_string(step));
      res.metrics.push_back(m);
    }
  }
  res.final_eval = last_eval;
  return res;
}

inline KvFile checkpoint_meta(const TrainConfig& cfg, std::size_t step) {
  KvFile meta;
  meta.set("step", std::to_string(step));
  meta.set("seed_extractor", std::to_string(cfg.seed_extractor));
  meta.set("mode", std::string(to_string(cfg.mode)));
  meta.set("patch_size", std::to_string(cfg.patch.size));
  meta.set("stride", std::to_string(cfg.patch.stride));
  return meta;
}

/// Loads the datasets named in the config, trains, and writes
/// out_dir/{metrics.csv, config.txt, checkpoint/}.
inline TrainResult train(const TrainConfig& cfg) {
  validate(cfg);
  const Dataset train_split = load_dataset(cfg.dataset);
  std::optional<Dataset> eval_split;
  if (!cfg.eval_dataset.empty()) eval_split = load_dataset(cfg.eval_dataset);
  auto res = train(cfg, train_split, eval_split ? &*eval_split : nullptr);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir / "metrics.csv", std::ios::trunc | std::ios::binary);
    if (!csv) throw IoError("cannot write " + (cfg.out_dir / "metrics.csv").string());
    csv << metrics_csv(res.metrics);
    write_kv(config_to_kv(cfg), cfg.out_dir / "config.txt");
    save_checkpoint(cfg.out_dir / "checkpoint", res.weights, checkpoint_meta(cfg, res.metrics.size()));
  }
  return res;
}

}  // namespace d2sm
