#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "argb/data.hpp"
#include "argb/errors.hpp"
#include "argb/model.hpp"
#include "argb/train.hpp"
#include "support/testutil.hpp"

using argb::ArgbModel;
using argb::Rng;
using argb::Tensor;
namespace train = argb::train;
namespace data = argb::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("argb_train_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

data::PatchStore tiny_store(const fs::path& dir, int count, int size, uint64_t seed) {
  Rng rng(seed);
  data::PatchStore s = data::PatchStore::create(dir.string());
  data::synth_into(s, data::SynthKind::gradients, count, size, rng);
  s.save_manifest();
  return s;
}

}  // namespace

TEST_CASE("balancing loss closed forms") {
  // uniform probabilities: ties all break to expert 0, fr = e0, P = 1/K
  const int K = 5;
  Tensor probs({1, K, 4, 4}, 1.0f / K);
  Tensor masks = argb::top1_masks(probs);
  CHECK(train::balance_loss(probs, masks) == doctest::Approx(1.0).epsilon(1e-6));

  // all mass on expert 0: loss = K
  Tensor hard({1, K, 4, 4});
  for (int p = 0; p < 16; ++p) hard.v[static_cast<size_t>(p)] = 1.0f;
  Tensor hmasks = argb::top1_masks(hard);
  CHECK(train::balance_loss(hard, hmasks) == doctest::Approx(static_cast<double>(K)).epsilon(1e-6));

  // K = 1 is identically 1
  Tensor one({2, 1, 3, 3}, 1.0f);
  CHECK(train::balance_loss(one, argb::top1_masks(one)) == doctest::Approx(1.0));

  // near-uniform assignment constructed to spread argmax across experts
  Tensor spread({1, 4, 2, 2}, 0.25f);
  for (int p = 0; p < 4; ++p) spread.v[static_cast<size_t>(p % 4) * 4 + p] += 1e-4f;
  Tensor smasks = argb::top1_masks(spread);
  CHECK(train::balance_loss(spread, smasks) == doctest::Approx(1.0).epsilon(1e-3));

  CHECK_THROWS(train::balance_loss(probs, Tensor({1, K, 2, 2})));
}

TEST_CASE("balancing loss gradient matches the closed form") {
  const int K = 3;
  Rng rng(3);
  Tensor probs = testutil::random_tensor({1, K, 3, 3}, rng, 0.0, 1.0);
  Tensor masks = argb::top1_masks(probs);
  Tensor dprobs(probs.shape);
  (void)train::balance_loss(probs, masks, &dprobs);
  const double m = 9.0;
  for (int k = 0; k < K; ++k) {
    double fr = 0.0;
    for (int p = 0; p < 9; ++p) fr += masks.v[static_cast<size_t>(k) * 9 + p];
    fr /= m;
    for (int p = 0; p < 9; ++p)
      CHECK(dprobs.v[static_cast<size_t>(k) * 9 + p] ==
            doctest::Approx(K * fr / m).epsilon(1e-5));
  }
}

TEST_CASE("printed balancing form evaluates K^2 sum of max probabilities") {
  const int K = 4;
  Tensor probs({1, K, 2, 2}, 1.0f / K);
  Tensor masks = argb::top1_masks(probs);
  const double v = train::balance_loss(probs, masks, nullptr, /*printed_form=*/true);
  // K^2 * sum over 4 pixels of 1/K = K * pixels
  CHECK(v == doctest::Approx(16.0).epsilon(1e-6));
}

TEST_CASE("cosine warm-restart schedule hits lr0 at every restart") {
  train::AETrainConfig cfg = train::AETrainConfig::desk(0);
  CHECK(train::lr_at(cfg, 0) == doctest::Approx(5e-4));
  // restarts at 250, 750, 1750, 3750, then every 2000
  for (int64_t b : {250, 750, 1750, 3750, 5750, 7750, 9750})
    CHECK(train::lr_at(cfg, b) == doctest::Approx(5e-4));
  // half way through the first period: half amplitude
  CHECK(train::lr_at(cfg, 125) == doctest::Approx(2.5e-4).epsilon(1e-6));
  // decays within a period
  CHECK(train::lr_at(cfg, 249) < 1e-5);

  // full-scale schedule: doubling periods 1k ... 256k sum to exactly 511k
  train::AETrainConfig full;
  int64_t boundary = 0, period = full.first_period;
  while (boundary + period <= full.total_steps && boundary < full.total_steps) {
    CHECK(train::lr_at(full, boundary) == doctest::Approx(5e-4));
    boundary += period;
    period = std::min(period * 2, full.max_period);
  }
  CHECK(boundary == full.total_steps);
}

TEST_CASE("recon loss is deterministic under a fixed rng and validates input") {
  ArgbModel m(2, 8);
  Rng rng(4);
  Tensor x = testutil::random_image(12, 12, rng);
  Rng r1(99), r2(99);
  const double a = train::recon_loss(m, x, 1.0, r1);
  const double b = train::recon_loss(m, x, 1.0, r2);
  CHECK(a == b);
  Rng r3(100);
  CHECK(train::recon_loss(m, x, 1.0, r3) != a);
  CHECK_THROWS(train::recon_loss(m, x, -1.0, r1));

  // zero noise equals the plain L1 between reconstruction and input
  Rng r4(0);
  const double c = train::recon_loss(m, x, 0.0, r4);
  Tensor y = m.decode(m.encode(x));
  double s = 0.0;
  for (size_t i = 0; i < y.numel(); ++i) s += std::fabs(static_cast<double>(y.v[i]) - x.v[i]);
  CHECK(c == doctest::Approx(s / static_cast<double>(y.numel())).epsilon(1e-6));
}

TEST_CASE("short training run: losses logged, lambda scales, determinism") {
  TempDir td;
  data::PatchStore ds = tiny_store(td.path / "store", 6, 16, 11);

  train::AETrainConfig cfg = train::AETrainConfig::desk(42);
  cfg.patch_size = 16;
  cfg.batch_size = 2;
  cfg.total_steps = 8;
  cfg.num_experts = 2;

  ArgbModel m1(cfg.num_experts, cfg.seed);
  train::TrainResult r1 = train::train_autoencoder(m1, cfg, ds, "", "");
  REQUIRE(r1.log.size() == 8);
  for (const auto& rec : r1.log) {
    CHECK(std::isfinite(rec.l_recon));
    CHECK(rec.l_ae == doctest::Approx(rec.l_recon + 0.01 * rec.l_balance).epsilon(1e-12));
    CHECK(rec.lr == train::lr_at(cfg, rec.step));
  }

  // identical seed reproduces identical parameters
  ArgbModel m2(cfg.num_experts, cfg.seed);
  train::TrainResult r2 = train::train_autoencoder(m2, cfg, ds, "", "");
  auto p1 = m1.params(), p2 = m2.params();
  CHECK(argb::nn::param_hash(p1) == argb::nn::param_hash(p2));
  for (size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].l_ae == r2.log[i].l_ae);

  // lambda = 0 reduces the total to the reconstruction term
  train::AETrainConfig cfg0 = cfg;
  cfg0.lambda_balance = 0.0;
  ArgbModel m3(cfg0.num_experts, cfg0.seed);
  train::TrainResult r3 = train::train_autoencoder(m3, cfg0, ds, "", "");
  for (const auto& rec : r3.log) CHECK(rec.l_ae == rec.l_recon);
}

TEST_CASE("checkpoint round trip continues training bit-exactly") {
  TempDir td;
  data::PatchStore ds = tiny_store(td.path / "store", 4, 16, 12);
  train::AETrainConfig cfg = train::AETrainConfig::desk(7);
  cfg.patch_size = 16;
  cfg.batch_size = 1;
  cfg.num_experts = 2;

  ArgbModel ma(cfg.num_experts, cfg.seed);
  train::AETrainer ta(ma, cfg, ds);
  for (int i = 0; i < 3; ++i) ta.step();
  const std::string ck = (td.path / "mid.ckpt").string();
  ta.save_checkpoint(ck);
  ta.step();  // continuous path
  const uint64_t h_cont = argb::nn::param_hash(ma.params());

  ArgbModel mb(cfg.num_experts, cfg.seed);
  train::AETrainer tb(mb, cfg, ds);
  tb.load_checkpoint(ck);
  CHECK(tb.step_count() == 3);
  tb.step();  // resumed path
  CHECK(argb::nn::param_hash(mb.params()) == h_cont);
}

TEST_CASE("identity-rigged model reconstructs a constant image exactly") {
  ArgbModel m(2, 14);
  testutil::make_identity_lift(m);
  Tensor flat({1, 3, 16, 16}, 0.42f);
  Rng rng(0);
  CHECK(train::recon_loss(m, flat, 0.0, rng) == 0.0);
}

TEST_CASE("smoothed reconstruction loss falls over a 200-step desk-shaped run") {
  TempDir td;
  Rng rng(15);
  data::PatchStore ds = data::PatchStore::create((td.path / "g8").string());
  data::synth_into(ds, data::SynthKind::gradients, 8, 24, rng);
  ds.save_manifest();

  train::AETrainConfig cfg = train::AETrainConfig::desk(3);
  cfg.patch_size = 24;
  cfg.batch_size = 1;
  cfg.total_steps = 200;
  cfg.num_experts = 2;
  ArgbModel m(cfg.num_experts, cfg.seed);
  train::TrainResult res = train::train_autoencoder(m, cfg, ds, "", "");
  auto window_mean = [&](size_t end) {
    double s = 0.0;
    for (size_t i = end - 10; i < end; ++i) s += res.log[i].l_recon;
    return s / 10.0;
  };
  CHECK(window_mean(200) < window_mean(20));
}

TEST_CASE("non-finite loss aborts with a diagnostic snapshot") {
  TempDir td;
  data::PatchStore ds = tiny_store(td.path / "store", 3, 16, 16);
  train::AETrainConfig cfg = train::AETrainConfig::desk(4);
  cfg.patch_size = 16;
  cfg.batch_size = 1;
  cfg.num_experts = 2;
  cfg.total_steps = 3;
  ArgbModel m(cfg.num_experts, cfg.seed);
  // poison one weight so the first forward produces NaN
  auto params = m.params();
  params[0].second->value.v[0] = std::nanf("");
  const std::string ckpt = (td.path / "run.ckpt").string();
  CHECK_THROWS_AS(train::train_autoencoder(m, cfg, ds, "", ckpt), argb::NumericalError);
  CHECK(fs::exists(ckpt + ".diag"));
}

TEST_CASE("training aborts on empty datasets") {
  TempDir td;
  data::PatchStore empty = data::PatchStore::create((td.path / "empty").string());
  train::AETrainConfig cfg = train::AETrainConfig::desk(1);
  ArgbModel m(cfg.num_experts, 1);
  CHECK_THROWS_AS(train::AETrainer(m, cfg, empty), argb::MissingInputError);
}

TEST_CASE("reconstruction evaluation: PSNR formula, cap and empty rejection") {
  CHECK(train::psnr(Tensor({1, 3, 2, 2}, 0.5f), Tensor({1, 3, 2, 2}, 0.5f)) == 100.0);
  // known mse 1e-4 -> 40 dB
  Tensor a({1, 3, 2, 2}, 0.0f), b({1, 3, 2, 2}, 0.01f);
  CHECK(train::psnr(a, b) == doctest::Approx(40.0).epsilon(1e-6));

  TempDir td;
  data::PatchStore empty = data::PatchStore::create((td.path / "void").string());
  ArgbModel m(1, 2);
  CHECK_THROWS_AS(train::evaluate_reconstruction(m, empty), argb::MissingInputError);

  data::PatchStore ds = tiny_store(td.path / "store", 3, 16, 13);
  train::EvalResult r = train::evaluate_reconstruction(m, ds);
  CHECK(r.count == 3);
  CHECK(std::isfinite(r.mean_psnr));
  CHECK(r.mean_abs_diff >= 0.0);
}
