#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "d2sm/grad_check.hpp"
#include "d2sm/train.hpp"
#include "test_util.hpp"

namespace d2sm {
namespace {

Dataset make_split(std::size_t count, double sigma, std::uint64_t seed, std::size_t size = 16) {
  Dataset ds;
  ds.manifest.spec = DatasetSpec{.count = count, .height = size, .width = size, .sigma = sigma, .seed = seed};
  for (std::size_t i = 0; i < count; ++i) {
    auto [c, n] = generate_pair(ds.manifest.spec, i);
    ds.clean.push_back(std::move(c));
    ds.noisy.push_back(std::move(n));
  }
  return ds;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.patch = {8, 4};
  c.lr = 1e-3;
  c.seed_data = 1;
  c.seed_model = 2;
  c.seed_extractor = 3;
  return c;
}

TEST(Train, ZeroEpochsLeavesInitialWeights) {
  const auto ds = make_split(8, 0.1, 1);
  auto cfg = small_config();
  cfg.epochs = 0;
  const auto r = train(cfg, ds, &ds);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.weights, init_denoiser<float>(cfg.seed_model, 1));
}

TEST(Train, StepCountAndDeterminism) {
  const auto ds = make_split(10, 0.1, 2);
  const auto cfg = small_config();
  const auto a = train(cfg, ds, &ds), b = train(cfg, ds, &ds);
  EXPECT_EQ(a.metrics.size(), 4u);  // 2 epochs x floor(10 / 4)
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  auto capped = cfg;
  capped.max_steps = 3;
  EXPECT_EQ(train(capped, ds, nullptr).metrics.size(), 3u);
}

TEST(Train, ZeroLambdaMatchesPixelOnlyBitwise) {
  const auto ds = make_split(8, 0.1, 3);
  for (SampleMode mode : {SampleMode::patch, SampleMode::batch}) {
    auto with = small_config();
    with.mode = mode;
    with.lambda = 0.0;
    auto without = with;
    without.objective = Objective::none;
    const auto a = train(with, ds, &ds), b = train(without, ds, &ds);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  }
}

TEST(Train, FeatureTermChangesTrajectory) {
  const auto ds = make_split(8, 0.1, 4);
  auto with = small_config();
  auto without = with;
  without.objective = Objective::none;
  EXPECT_NE(train(with, ds, nullptr).weights, train(without, ds, nullptr).weights);
}

TEST(Train, AllObjectivesModesAndQueueRun) {
  const auto ds = make_split(8, 0.1, 5);
  for (Objective o : {Objective::d2sm, Objective::perceptual})
    for (SampleMode m : {SampleMode::patch, SampleMode::batch})
      for (bool q : {false, true})
        for (Variant v : {Variant::kl, Variant::js}) {
          auto cfg = small_config();
          cfg.objective = o;
          cfg.mode = m;
          cfg.use_queue = q;
          cfg.queue_size = 16;
          cfg.variant = v;
          const auto r = train(cfg, ds, &ds);
          ASSERT_EQ(r.metrics.size(), 4u);
          for (const auto& row : r.metrics) {
            EXPECT_TRUE(std::isfinite(row.total_loss));
            EXPECT_GE(row.d2sm_loss, -1e-6);
          }
          EXPECT_TRUE(std::isfinite(r.final_eval.psnr));
        }
}

TEST(Train, PixelLossDecreases) {
  const auto ds = make_split(16, 0.1, 6);
  auto cfg = small_config();
  cfg.objective = Objective::none;
  cfg.epochs = 25;
  cfg.lr = 3e-3;
  const auto r = train(cfg, ds, nullptr);
  EXPECT_LT(r.metrics.back().pixel_loss, 0.8 * r.metrics.front().pixel_loss);
}

TEST(Evaluate, IdentityOnNoiseFreeDataIsPerfect) {
  const auto ds = make_split(4, 0.0, 7);
  const auto ext = init_extractor<float>(1);
  const auto r = evaluate(zero_denoiser<float>(1), ext, ds, SampleMode::patch, {8, 4});
  EXPECT_TRUE(std::isinf(r.psnr) && r.psnr > 0);
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_NEAR(r.feature_kl, 0.0, 1e-12);
}

TEST(Evaluate, IdentityOnNoisyDataMatchesNoiseLevel) {
  const auto ds = make_split(32, 0.1, 8, 32);
  const auto ext = init_extractor<float>(1);
  const auto r = evaluate(zero_denoiser<float>(1), ext, ds, SampleMode::patch, {16, 8});
  EXPECT_NEAR(r.psnr, 20.0, 0.3);
  EXPECT_LT(r.ssim, 0.95);
  EXPECT_GT(r.feature_kl, 0.0);
  const auto rb = evaluate(zero_denoiser<float>(1), ext, ds, SampleMode::batch, {16, 8});
  EXPECT_EQ(rb.psnr, r.psnr);
  EXPECT_GT(rb.feature_kl, 0.0);
}

TEST(Evaluate, PerfectRestorationHasZeroFeatureKl) {
  const auto ds = make_split(3, 0.1, 9);
  const auto ext = init_extractor<double>(2);
  std::vector<Image<double>> clean;
  for (const auto& c : ds.clean) clean.push_back(c.cast<double>());
  for (SampleMode m : {SampleMode::patch, SampleMode::batch})
    EXPECT_NEAR(feature_kl(ext, std::span<const Image<double>>(clean), std::span<const Image<double>>(clean), m,
                           {8, 4}),
                0.0, 1e-12);
}

// Gradient of the summed per-image patch KL through extractor, patch scatter
// and denoiser, against central differences on the denoiser weights.
TEST(Train, FullChainGradient) {
  std::mt19937_64 rng(10);
  auto w = init_denoiser<double>(11, 1);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (auto& v : w.conv3.bias) v = dist(rng);
  const auto ext = init_extractor<double>(12);
  const PatchSpec spec{4, 2};
  std::vector<Image<double>> noisy, clean;
  for (int i = 0; i < 2; ++i) {
    noisy.push_back(testing::random_image<double>(8, 8, 1, rng));
    clean.push_back(testing::random_image<double>(8, 8, 1, rng));
  }
  const auto grid = patch_grid(8, 8, spec);
  auto loss = [&](const DenoiserWeights<double>& wt) {
    const auto out = denoise_forward(wt, std::span<const Image<double>>(noisy));
    double acc = 0.0;
    for (int i = 0; i < 2; ++i) {
      const auto pr = extract_patches(out[i], grid), pc = extract_patches(clean[i], grid);
      acc += divergence(extract_features(ext, std::span<const Image<double>>(pr)),
                        extract_features(ext, std::span<const Image<double>>(pc), Origin::clear), Variant::kl);
    }
    return acc;
  };

  std::vector<DenoiserTrace<double>> traces;
  const auto out = denoise_forward(w, std::span<const Image<double>>(noisy), &traces);
  std::vector<Image<double>> dout;
  for (int i = 0; i < 2; ++i) {
    const auto pr = extract_patches(out[i], grid), pc = extract_patches(clean[i], grid);
    std::vector<ExtractorTrace<double>> et;
    const auto fx = extract_features(ext, std::span<const Image<double>>(pr), et);
    const auto fy = extract_features(ext, std::span<const Image<double>>(pc), Origin::clear);
    const auto r = divergence_with_grad(fx, fy, Variant::kl, LiveMask::all(fx.n));
    Image<double> g(8, 8, 1);
    scatter_patch_grads(extract_backward(ext, et, r.grad), grid, g);
    dout.push_back(std::move(g));
  }
  const auto grad = denoise_backward(w, traces, std::span<const Image<double>>(dout));
  for (std::size_t k : {0u, 4u, 5u}) {
    auto probe = w;
    auto* target = probe.tensors()[k];
    const auto numeric = central_differences(
        [&](const std::vector<double>& flat) {
          *target = flat;
          return loss(probe);
        },
        *w.tensors()[k], 1e-5);
    const std::vector<double> analytic(*grad.tensors()[k]);
    EXPECT_LE(max_relative_error(analytic, numeric), 1e-5) << kDenoiserTensorNames[k];
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir("ckpt");
  const auto w = init_denoiser<float>(13, 2);
  KvFile meta;
  meta.set("step", "7");
  save_checkpoint(dir / "ck", w, meta);
  const auto ck = load_checkpoint(dir / "ck");
  EXPECT_EQ(ck.weights, w);
  EXPECT_EQ(ck.meta.get("step"), "7");
  EXPECT_EQ(ck.meta.get("channels"), "2");
  EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);
}

TEST(TrainConfig, ParseAndRoundTrip) {
  const auto c = config_from_kv(parse_kv("dataset = d\nlambda = 0.25\nmode = batch\nvariant = js\nuse_queue = true\n"
                                         "queue_size = 32\nbatch_size = 8\nobjective = perceptual\n"));
  EXPECT_EQ(c.lambda, 0.25);
  EXPECT_EQ(c.mode, SampleMode::batch);
  EXPECT_EQ(c.variant, Variant::js);
  EXPECT_TRUE(c.use_queue);
  EXPECT_EQ(c.objective, Objective::perceptual);
  const auto back = config_from_kv(config_to_kv(c));
  EXPECT_EQ(format_kv(config_to_kv(back)), format_kv(config_to_kv(c)));
}

TEST(TrainConfig, Errors) {
  EXPECT_THROW(config_from_kv(parse_kv("lamda = 0.1\n")), FormatError);
  EXPECT_THROW(config_from_kv(parse_kv("lambda = abc\n")), Error);
  EXPECT_THROW(config_from_kv(parse_kv("lambda = -1\n")), ValidationError);
  EXPECT_THROW(config_from_kv(parse_kv("lambda = 0\nw_pixel = 0\n")), ValidationError);
  EXPECT_THROW(config_from_kv(parse_kv("mode = image\n")), ValidationError);
  EXPECT_THROW(config_from_kv(parse_kv("mode = batch\nbatch_size = 1\n")), ValidationError);
  EXPECT_THROW(config_from_kv(parse_kv("use_queue = true\nqueue_size = 1\n")), ValidationError);
  EXPECT_THROW(config_from_kv(parse_kv("lr = 0\n")), ValidationError);
}

TEST(MetricsCsv, Format) {
  MetricsRecord r;
  r.step = 3;
  r.pixel_loss = 0.5;
  r.eval.psnr = kPsnrIdentical;
  EXPECT_EQ(metrics_csv({r}), std::string(kMetricsHeader) + "\n3,0.5,0,0,inf,0,0\n");
}

}  // namespace
}  // namespace d2sm
