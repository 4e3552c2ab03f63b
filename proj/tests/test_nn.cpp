#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "argb/nn.hpp"
#include "argb/rng.hpp"
#include "support/oracle.hpp"
#include "support/testutil.hpp"

using argb::Rng;
using argb::Tensor;
namespace nn = argb::nn;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

// double-precision train-mode batch norm for the finite-difference oracle
oracle::DTensor bn_train_ref(const oracle::DTensor& x, const std::vector<double>& gamma,
                             const std::vector<double>& beta, double eps = 1e-5) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const double m = static_cast<double>(N) * H * W;
  oracle::DTensor y = x;
  for (int c = 0; c < C; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int n = 0; n < N; ++n)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          s += x.at(n, c, yy, xx);
          s2 += x.at(n, c, yy, xx) * x.at(n, c, yy, xx);
        }
    const double mean = s / m, var = s2 / m - mean * mean;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int n = 0; n < N; ++n)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx)
          y.at(n, c, yy, xx) =
              gamma[static_cast<size_t>(c)] * (x.at(n, c, yy, xx) - mean) * inv +
              beta[static_cast<size_t>(c)];
  }
  return y;
}

}  // namespace

TEST_CASE("batch norm training-mode input gradient matches finite differences") {
  Rng rng(7);
  const int N = 2, C = 3, H = 4, W = 5;
  Tensor x = random_tensor({N, C, H, W}, rng);
  Tensor g = random_tensor({N, C, H, W}, rng);

  nn::BatchNorm2d bn(C);
  Rng prng(8);
  for (auto& v : bn.gamma().value.v) v = static_cast<float>(prng.uniform(0.5, 1.5));
  for (auto& v : bn.beta().value.v) v = static_cast<float>(prng.uniform(-0.5, 0.5));
  const std::vector<double> gamma(bn.gamma().value.v.begin(), bn.gamma().value.v.end());
  const std::vector<double> beta(bn.beta().value.v.begin(), bn.beta().value.v.end());

  nn::LayerCache cache;
  (void)bn.forward(x, /*training=*/true, &cache);
  Tensor dx = bn.backward(g, cache, true, true);

  auto loss_of = [&](const std::vector<double>& xd) {
    oracle::DTensor xt(x.shape);
    xt.v = xd;
    const oracle::DTensor y = bn_train_ref(xt, gamma, beta);
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * g.v[i];
    return s;
  };
  const auto fd = oracle::fd_gradient(loss_of, std::vector<double>(x.v.begin(), x.v.end()), 1e-4);
  for (size_t i = 0; i < fd.size(); ++i) {
    if (std::fabs(fd[i]) < 1e-6 && std::fabs(dx.v[i]) < 1e-4) continue;
    CHECK(rel_err(dx.v[i], fd[i]) < 2e-2);
  }

  // gamma / beta gradients
  auto loss_gamma = [&](const std::vector<double>& gd) {
    const oracle::DTensor y = bn_train_ref(oracle::from_float(x), gd, beta);
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * g.v[i];
    return s;
  };
  const auto fdg = oracle::fd_gradient(loss_gamma, gamma, 1e-5);
  for (int c = 0; c < C; ++c)
    CHECK(rel_err(bn.gamma().grad.v[static_cast<size_t>(c)], fdg[static_cast<size_t>(c)]) < 1e-3);
}

TEST_CASE("batch norm eval mode uses running statistics and is affine") {
  Rng rng(9);
  nn::BatchNorm2d bn(2);
  bn.running_mean().v = {0.3f, -0.2f};
  bn.running_var().v = {0.5f, 2.0f};
  bn.gamma().value.v = {1.5f, 0.8f};
  bn.beta().value.v = {0.1f, -0.4f};

  Tensor x = random_tensor({1, 2, 3, 3}, rng);
  Tensor y = bn.forward(x, false, nullptr);
  for (int c = 0; c < 2; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(bn.running_var().v[c]) + 1e-5f);
    for (int i = 0; i < 9; ++i) {
      const double want =
          bn.gamma().value.v[c] * (x.v[c * 9 + i] - bn.running_mean().v[c]) * inv +
          bn.beta().value.v[c];
      CHECK(std::fabs(y.v[c * 9 + i] - want) < 1e-5);
    }
  }
}

TEST_CASE("channel softmax backward matches finite differences") {
  Rng rng(10);
  const int K = 5, H = 2, W = 3;
  Tensor x = random_tensor({1, K, H, W}, rng);
  Tensor g = random_tensor({1, K, H, W}, rng);

  nn::ChannelSoftmax sm;
  nn::LayerCache cache;
  (void)sm.forward(x, false, &cache);
  Tensor dx = sm.backward(g, cache, true, false);

  auto loss_of = [&](const std::vector<double>& xd) {
    oracle::DTensor xt(x.shape);
    xt.v = xd;
    const oracle::DTensor y = oracle::softmax_channels(xt);
    double s = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * g.v[i];
    return s;
  };
  const auto fd = oracle::fd_gradient(loss_of, std::vector<double>(x.v.begin(), x.v.end()), 1e-5);
  for (size_t i = 0; i < fd.size(); ++i) CHECK(std::fabs(dx.v[i] - fd[i]) < 1e-4);
}

TEST_CASE("leaky relu backward routes gradients by input sign") {
  Tensor x({1, 1, 1, 4});
  x.v = {-2.0f, -0.1f, 0.5f, 3.0f};
  Tensor g({1, 1, 1, 4});
  g.v = {1.0f, 1.0f, 1.0f, 1.0f};
  nn::LeakyReLU act(0.2f);
  nn::LayerCache cache;
  Tensor y = act.forward(x, false, &cache);
  CHECK(y.v[0] == doctest::Approx(-0.4f));
  CHECK(y.v[2] == doctest::Approx(0.5f));
  Tensor dx = act.backward(g, cache, true, false);
  CHECK(dx.v[0] == doctest::Approx(0.2f));
  CHECK(dx.v[1] == doctest::Approx(0.2f));
  CHECK(dx.v[2] == doctest::Approx(1.0f));
  CHECK(dx.v[3] == doctest::Approx(1.0f));
}

TEST_CASE("adam takes a step against the gradient with bias correction") {
  nn::Param p;
  p.value = Tensor({2}, 1.0f);
  p.grad = Tensor({2});
  p.grad.v = {0.5f, -0.5f};
  std::vector<std::pair<std::string, nn::Param*>> params{{"p", &p}};
  nn::Adam adam;
  adam.step(params, 0.1);
  // first step moves by ~lr in the gradient's sign direction
  CHECK(p.value.v[0] == doctest::Approx(1.0f - 0.1f).epsilon(1e-3));
  CHECK(p.value.v[1] == doctest::Approx(1.0f + 0.1f).epsilon(1e-3));
}

TEST_CASE("gradient inf-norm clipping rescales all gradients") {
  nn::Param p;
  p.value = Tensor({3});
  p.grad = Tensor({3});
  p.grad.v = {40.0f, -10.0f, 4.0f};
  std::vector<std::pair<std::string, nn::Param*>> params{{"p", &p}};
  nn::clip_grad_inf_norm(params, 20.0);
  CHECK(p.grad.v[0] == doctest::Approx(20.0f));
  CHECK(p.grad.v[1] == doctest::Approx(-5.0f));
  CHECK(p.grad.v[2] == doctest::Approx(2.0f));
  // under the threshold: untouched
  p.grad.v = {1.0f, -2.0f, 0.5f};
  nn::clip_grad_inf_norm(params, 20.0);
  CHECK(p.grad.v[1] == doctest::Approx(-2.0f));
}

TEST_CASE("param hash is order- and content-sensitive") {
  nn::Param a, b;
  a.value = Tensor({2}, 1.0f);
  b.value = Tensor({2}, 1.0f);
  std::vector<std::pair<std::string, nn::Param*>> p1{{"a", &a}, {"b", &b}};
  const uint64_t h1 = nn::param_hash(p1);
  b.value.v[0] = 2.0f;
  CHECK(nn::param_hash(p1) != h1);
}
