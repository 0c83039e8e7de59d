// d2sm command-line tool: data generation, feature extraction, divergence
// evaluation, gradient verification, training and evaluation.
//
// JSON results go to stdout; bulk artifacts go to --out paths.
// Exit codes: 0 success, 1 validation/runtime error ("error: ..." on stderr), 2 usage error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "d2sm/d2sm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct PatchFlags {
  std::size_t size = 0;
  std::size_t stride = 0;

  std::optional<d2sm::PatchSpec> spec() const {
    if (size == 0 && stride == 0) return std::nullopt;
    if (size == 0 || stride == 0) throw d2sm::ValidationError("--patch-size and --stride must be given together");
    return d2sm::PatchSpec{size, stride};
  }
};

void add_patch_flags(CLI::App* cmd, PatchFlags& p) {
  cmd->add_option("--patch-size", p.size, "Sliding-window size K (pixels)");
  cmd->add_option("--stride", p.stride, "Sliding-window stride (pixels)");
}

/// Rank-2 tensors are taken as feature batches; rank-3 images are cut into
/// patches and passed through the seeded extractor.
d2sm::FeatureBatch<double> load_samples(const fs::path& path, const std::optional<d2sm::PatchSpec>& patch,
                                        std::uint64_t seed) {
  const auto raw = d2sm::read_tensor(path);
  if (raw.dims.size() == 2) return d2sm::features_from_raw<double>(raw);
  if (raw.dims.size() != 3) throw d2sm::FormatError(path.string() + ": expected a rank-2 or rank-3 tensor");
  if (!patch) throw d2sm::ValidationError(path.string() + ": image input needs --patch-size and --stride");
  const auto img = d2sm::image_from_raw<float>(raw);
  const auto ext = d2sm::init_extractor<float>(seed, img.channels);
  const auto patches = d2sm::extract_patches(img, d2sm::patch_grid(img.height, img.width, *patch));
  return d2sm::extract_features(ext, std::span<const d2sm::Image<float>>(patches)).cast<double>();
}

json eval_json(const d2sm::EvalRecord& r) {
  // +inf PSNR (exact reconstruction) serialises as null.
  return json{{"psnr", r.psnr}, {"ssim", r.ssim}, {"feature_kl", r.feature_kl}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep semantic statistics matching: losses, data and a toy denoising harness"};
  app.require_subcommand(1);

  // gen-data
  d2sm::DatasetSpec gen;
  fs::path gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic texture-grid denoising dataset");
  gen_cmd->add_option("--count", gen.count, "Number of image pairs")->required();
  gen_cmd->add_option("--height", gen.height, "Image height")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--channels", gen.channels, "Image channels")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Number of texture classes M")->capture_default_str();
  gen_cmd->add_option("--sigma", gen.sigma, "Gaussian noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->required();
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();

  // extract
  fs::path ex_dataset, ex_out;
  std::uint64_t ex_seed = 0;
  PatchFlags ex_patch;
  auto* ex_cmd = app.add_subcommand("extract", "Extract features for the clean and noisy splits of a dataset");
  ex_cmd->add_option("--dataset", ex_dataset, "Dataset directory")->required();
  ex_cmd->add_option("--seed", ex_seed, "Extractor seed")->required();
  ex_cmd->add_option("--out", ex_out, "Output directory")->required();
  add_patch_flags(ex_cmd, ex_patch);

  // divergence
  fs::path dv_a, dv_b;
  std::string dv_variant = "kl";
  std::uint64_t dv_seed = 0;
  PatchFlags dv_patch;
  auto* dv_cmd = app.add_subcommand("divergence", "Divergence between the neighbour distributions of two sample sets");
  dv_cmd->add_option("--a", dv_a, "Restored-side features (rank-2) or image (rank-3)")->required();
  dv_cmd->add_option("--b", dv_b, "Clear-side features (rank-2) or image (rank-3)")->required();
  dv_cmd->add_option("--variant", dv_variant, "kl | ikl | js")->capture_default_str();
  dv_cmd->add_option("--seed", dv_seed, "Extractor seed for image inputs")->capture_default_str();
  add_patch_flags(dv_cmd, dv_patch);

  // grad-check
  std::size_t gc_n = 6, gc_d = 8;
  std::uint64_t gc_seed = 0;
  std::string gc_variant = "kl", gc_precision = "double";
  auto* gc_cmd = app.add_subcommand("grad-check", "Compare analytic divergence gradients to finite differences");
  gc_cmd->add_option("--n", gc_n, "Samples")->capture_default_str();
  gc_cmd->add_option("--d", gc_d, "Feature dimension")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "Instance seed")->required();
  gc_cmd->add_option("--variant", gc_variant, "kl | ikl | js")->capture_default_str();
  gc_cmd->add_option("--precision", gc_precision, "double | single")->capture_default_str();

  // train
  fs::path tr_config, tr_out;
  auto* tr_cmd = app.add_subcommand("train", "Train the toy denoiser from a key = value config file");
  tr_cmd->add_option("--config", tr_config, "Config file")->required();
  tr_cmd->add_option("--out", tr_out, "Output directory (overrides out_dir)");

  // eval
  fs::path ev_ckpt, ev_dataset;
  std::string ev_mode;
  std::optional<std::uint64_t> ev_seed;
  PatchFlags ev_patch;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
  ev_cmd->add_option("--dataset", ev_dataset, "Dataset directory")->required();
  ev_cmd->add_option("--mode", ev_mode, "batch | patch (default: from checkpoint)");
  ev_cmd->add_option("--seed-extractor", ev_seed, "Extractor seed (default: from checkpoint)");
  add_patch_flags(ev_cmd, ev_patch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    json out;
    if (gen_cmd->parsed()) {
      const auto m = d2sm::generate_dataset(gen, gen_out);
      out = {{"out", gen_out.string()}, {"count", m.spec.count}, {"sigma", m.spec.sigma}, {"seed", m.spec.seed}};
    } else if (ex_cmd->parsed()) {
      const auto ds = d2sm::load_dataset(ex_dataset);
      const auto ext = d2sm::init_extractor<float>(ex_seed, ds.manifest.spec.channels);
      const auto patch = ex_patch.spec();
      auto features = [&](const std::vector<d2sm::Image<float>>& imgs, d2sm::Origin origin) {
        if (!patch) return d2sm::extract_features(ext, std::span<const d2sm::Image<float>>(imgs), origin);
        std::vector<d2sm::Image<float>> all;
        for (const auto& img : imgs) {
          auto p = d2sm::extract_patches(img, d2sm::patch_grid(img.height, img.width, *patch));
          std::move(p.begin(), p.end(), std::back_inserter(all));
        }
        return d2sm::extract_features(ext, std::span<const d2sm::Image<float>>(all), origin);
      };
      fs::create_directories(ex_out);
      const auto fc = features(ds.clean, d2sm::Origin::clear);
      const auto fn = features(ds.noisy, d2sm::Origin::restored);
      d2sm::write_tensor(fc, ex_out / "clean.d2tn");
      d2sm::write_tensor(fn, ex_out / "noisy.d2tn");
      out = {{"n", fc.n},
             {"d", fc.d},
             {"clean", (ex_out / "clean.d2tn").string()},
             {"noisy", (ex_out / "noisy.d2tn").string()}};
    } else if (dv_cmd->parsed()) {
      const auto variant = d2sm::parse_variant(dv_variant);
      const auto patch = dv_patch.spec();
      const auto fa = load_samples(dv_a, patch, dv_seed);
      const auto fb = load_samples(dv_b, patch, dv_seed);
      const double value = d2sm::divergence(fa, fb, variant);
      out = {{"variant", std::string(d2sm::to_string(variant))}, {"n", fa.n}, {"value", value}};
    } else if (gc_cmd->parsed()) {
      const auto variant = d2sm::parse_variant(gc_variant);
      if (gc_precision != "double" && gc_precision != "single")
        throw d2sm::ValidationError("--precision must be double or single");
      const auto precision = gc_precision == "double" ? d2sm::Precision::double_ : d2sm::Precision::single;
      if (gc_n < 2 || gc_d < 1) throw d2sm::ValidationError("grad-check needs --n >= 2 and --d >= 1");
      std::mt19937_64 rng(gc_seed);
      const auto fx = d2sm::random_features<double>(gc_n, gc_d, rng);
      const auto fy = d2sm::random_features<double>(gc_n, gc_d, rng, d2sm::Origin::clear);
      const auto report = d2sm::grad_check_divergence(fx, fy, variant, precision);
      const double tol = d2sm::grad_check_tolerance(precision);
      out = {{"variant", gc_variant}, {"precision", gc_precision}, {"n", gc_n},        {"d", gc_d},
             {"value", report.value}, {"max_rel_err", report.max_rel_err}, {"tolerance", tol}};
      std::cout << out.dump() << "\n";
      if (!(report.max_rel_err <= tol)) {
        std::cerr << "error: gradient check failed, max_rel_err " << report.max_rel_err << " > " << tol << "\n";
        return 1;
      }
      return 0;
    } else if (tr_cmd->parsed()) {
      auto cfg = d2sm::read_config(tr_config);
      if (!tr_out.empty()) cfg.out_dir = tr_out;
      const auto res = d2sm::train(cfg);
      out = {{"steps", res.metrics.size()}, {"out_dir", cfg.out_dir.string()}, {"final", eval_json(res.final_eval)}};
      if (!res.metrics.empty()) {
        const auto& last = res.metrics.back();
        out["final"]["pixel_loss"] = last.pixel_loss;
        out["final"]["d2sm_loss"] = last.d2sm_loss;
        out["final"]["total_loss"] = last.total_loss;
      }
    } else if (ev_cmd->parsed()) {
      const auto ck = d2sm::load_checkpoint(ev_ckpt);
      const auto ds = d2sm::load_dataset(ev_dataset);
      const auto mode = d2sm::parse_mode(ev_mode.empty() ? ck.meta.get("mode") : ev_mode);
      const std::uint64_t seed =
          ev_seed ? *ev_seed : d2sm::parse_number<std::uint64_t>(ck.meta.get("seed_extractor"), "seed_extractor");
      auto patch = ev_patch.spec();
      if (!patch)
        patch = d2sm::PatchSpec{d2sm::parse_number<std::size_t>(ck.meta.get("patch_size"), "patch_size"),
                                d2sm::parse_number<std::size_t>(ck.meta.get("stride"), "stride")};
      const auto ext = d2sm::init_extractor<float>(seed, ds.manifest.spec.channels);
      const auto rec = d2sm::evaluate(ck.weights, ext, ds, mode, *patch);
      out = eval_json(rec);
      out["count"] = ds.noisy.size();
      out["mode"] = std::string(d2sm::to_string(mode));
    }
    std::cout << out.dump() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
