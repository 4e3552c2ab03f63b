#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "argb/kernels.hpp"
#include "argb/model.hpp"
#include "argb/nn.hpp"
#include "support/oracle.hpp"
#include "support/testutil.hpp"

using argb::ArgbModel;
using argb::EncodeCache;
using argb::Rng;
using argb::Tensor;
using testutil::random_image;
using testutil::random_tensor;

TEST_CASE("route returns a per-pixel probability simplex") {
  ArgbModel m(4, 123);
  Rng rng(1);
  Tensor x = random_image(8, 8, rng);
  Tensor probs = m.route(x);
  REQUIRE(probs.shape == std::vector<int>({1, 4, 8, 8}));
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) {
        const float p = probs.at(0, k, y, xx);
        CHECK(p >= 0.0f);
        s += p;
      }
      CHECK(std::fabs(s - 1.0) < 1e-5);
    }
}

TEST_CASE("route on a constant image gives identical interior probability vectors") {
  ArgbModel m(5, 9);
  Tensor x({1, 3, 8, 8});  // all zeros
  Tensor probs = m.route(x);
  // interior = full 7x7 receptive field coverage
  for (int k = 0; k < 5; ++k) {
    const float ref = probs.at(0, k, 3, 3);
    for (int y = 3; y <= 4; ++y)
      for (int xx = 3; xx <= 4; ++xx) CHECK(probs.at(0, k, y, xx) == ref);
  }
}

TEST_CASE("route rejects malformed inputs") {
  ArgbModel m(2, 3);
  CHECK_THROWS_AS(m.route(Tensor({1, 4, 8, 8})), std::invalid_argument);
  Tensor bad({1, 3, 8, 8});
  bad.v[17] = std::nanf("");
  CHECK_THROWS_AS(m.route(bad), std::invalid_argument);
}

TEST_CASE("router receptive field is exactly 7x7") {
  ArgbModel m(3, 77);
  Rng rng(2);
  Tensor x = random_image(16, 16, rng);
  Tensor base = m.route(x);
  // Chebyshev distance 4 from the center pixel (8,8): outside the 7x7 field
  Tensor pert = x;
  pert.at(0, 1, 8 - 4, 8) = 0.987f;
  Tensor moved = m.route(pert);
  for (int k = 0; k < 3; ++k) CHECK(moved.at(0, k, 8, 8) == base.at(0, k, 8, 8));
  // distance 3 is inside
  pert = x;
  pert.at(0, 1, 8 - 3, 8) += 0.3f;
  moved = m.route(pert);
  bool changed = false;
  for (int k = 0; k < 3; ++k) changed |= moved.at(0, k, 8, 8) != base.at(0, k, 8, 8);
  CHECK(changed);
}

TEST_CASE("top1 masks partition pixels with lowest-index tie-break") {
  Tensor probs({1, 3, 1, 1});
  probs.v = {0.7f, 0.2f, 0.1f};
  Tensor masks = argb::top1_masks(probs);
  CHECK(masks.v[0] == 1.0f);
  CHECK(masks.v[1] == 0.0f);
  CHECK(masks.v[2] == 0.0f);

  Tensor tie({1, 2, 1, 1});
  tie.v = {0.5f, 0.5f};
  masks = argb::top1_masks(tie);
  CHECK(masks.v[0] == 1.0f);
  CHECK(masks.v[1] == 0.0f);

  // uniform over K=4 on a 2x2 image: every pixel goes to expert 0
  Tensor uni({1, 4, 2, 2}, 0.25f);
  masks = argb::top1_masks(uni);
  for (int p = 0; p < 4; ++p) {
    CHECK(masks.v[static_cast<size_t>(p)] == 1.0f);
    for (int k = 1; k < 4; ++k) CHECK(masks.v[static_cast<size_t>(k * 4 + p)] == 0.0f);
  }
}

TEST_CASE("masks are binary, mutually exclusive and jointly exhaustive") {
  ArgbModel m(6, 5);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_image(9, 11, rng);
    Tensor masks = argb::top1_masks(m.route(x));
    for (int y = 0; y < 9; ++y)
      for (int xx = 0; xx < 11; ++xx) {
        float s = 0.0f;
        for (int k = 0; k < 6; ++k) {
          const float v = masks.at(0, k, y, xx);
          CHECK((v == 0.0f || v == 1.0f));
          s += v;
        }
        CHECK(s == 1.0f);
      }
  }
}

TEST_CASE("single-expert encode equals the expert output exactly") {
  ArgbModel m(1, 11);
  Rng rng(4);
  Tensor x = random_image(10, 10, rng);
  Tensor xi = m.encode(x);
  Tensor direct = m.expert(0).forward(x, false, nullptr);
  CHECK(testutil::max_abs_diff(xi, direct) == 0.0);
}

TEST_CASE("encode equals the loop-based per-pixel aggregation oracle") {
  ArgbModel m(4, 21);
  Rng rng(5);
  Tensor x = random_image(12, 12, rng);
  Tensor xi = m.encode(x);
  const oracle::NaiveModel nm = oracle::NaiveModel::from(m);
  const oracle::DTensor want = nm.encode(oracle::from_float(x));
  double maxdiff = 0.0;
  for (size_t i = 0; i < xi.numel(); ++i)
    maxdiff = std::max(maxdiff, std::fabs(xi.v[i] - want.v[i]));
  CHECK(maxdiff < 1e-4);
}

TEST_CASE("embedding locality: expert receptive field is exactly 9x9") {
  ArgbModel m(3, 31);
  Rng rng(6);
  Tensor x = random_image(20, 20, rng);
  Tensor base = m.encode(x);
  const int cy = 10, cx = 10;

  // perturbation at Chebyshev distance 5: bit-identical embedding at center
  Tensor pert = x;
  pert.at(0, 0, cy + 5, cx - 5) = 0.123f;
  pert.at(0, 2, cy - 5, cx) = 0.9f;
  Tensor moved = m.encode(pert);
  for (int c = 0; c < m.embedding_dim(); ++c)
    CHECK(moved.at(0, c, cy, cx) == base.at(0, c, cy, cx));

  // distance 4 lands inside the field
  pert = x;
  pert.at(0, 0, cy - 4, cx - 4) += 0.4f;
  moved = m.encode(pert);
  bool changed = false;
  for (int c = 0; c < m.embedding_dim(); ++c)
    changed |= moved.at(0, c, cy, cx) != base.at(0, c, cy, cx);
  CHECK(changed);

  // and the difference footprint stays within radius 4 of the edit
  for (int y = 0; y < 20; ++y)
    for (int xx = 0; xx < 20; ++xx) {
      const int d = std::max(std::abs(y - (cy - 4)), std::abs(xx - (cx - 4)));
      if (d <= 4) continue;
      for (int c = 0; c < m.embedding_dim(); ++c)
        CHECK(moved.at(0, c, y, xx) == base.at(0, c, y, xx));
    }
}

TEST_CASE("decode is the collapsed affine map") {
  ArgbModel m(2, 41);
  argb::EffectiveDecoder eff = m.effective_decoder();
  Rng rng(7);

  // zero embedding decodes to the bias at every pixel
  Tensor zero({1, m.embedding_dim(), 4, 4});
  Tensor out = m.decode(zero);
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 16; ++p)
      CHECK(std::fabs(out.v[static_cast<size_t>(c * 16 + p)] - eff.b.v[static_cast<size_t>(c)]) <
            1e-6);

  // matches A xi + b within 1e-5
  Tensor xi = random_tensor({1, m.embedding_dim(), 5, 3}, rng);
  out = m.decode(xi);
  std::vector<float> vec(static_cast<size_t>(m.embedding_dim()));
  for (int y = 0; y < 5; ++y)
    for (int xx = 0; xx < 3; ++xx) {
      for (int c = 0; c < m.embedding_dim(); ++c) vec[static_cast<size_t>(c)] = xi.at(0, c, y, xx);
      float want[3];
      eff.apply(vec.data(), want);
      for (int c = 0; c < 3; ++c) CHECK(std::fabs(out.at(0, c, y, xx) - want[c]) < 1e-5);
    }

  // affine: g(a xi1 + (1-a) xi2) = a g(xi1) + (1-a) g(xi2)
  Tensor xi2 = random_tensor({1, m.embedding_dim(), 5, 3}, rng);
  const float a = 0.3f;
  Tensor mixed(xi.shape);
  for (size_t i = 0; i < mixed.numel(); ++i) mixed.v[i] = a * xi.v[i] + (1 - a) * xi2.v[i];
  Tensor lhs = m.decode(mixed);
  Tensor o1 = m.decode(xi), o2 = m.decode(xi2);
  for (size_t i = 0; i < lhs.numel(); ++i)
    CHECK(std::fabs(lhs.v[i] - (a * o1.v[i] + (1 - a) * o2.v[i])) < 1e-5);

  CHECK_THROWS_AS(m.decode(Tensor({1, 7, 4, 4})), std::invalid_argument);
}

TEST_CASE("effective decoder projectors match the SVD oracle and its algebra") {
  ArgbModel m(2, 51);
  argb::EffectiveDecoder eff = m.effective_decoder();
  const int C = m.embedding_dim();
  CHECK(eff.rank == 3);
  CHECK(!eff.rank_deficient);

  const oracle::PinvOracle po = oracle::pinv_oracle(eff.A);
  double maxdiff = 0.0;
  for (size_t i = 0; i < eff.A_pinv.numel(); ++i)
    maxdiff = std::max(maxdiff, std::fabs(eff.A_pinv.v[i] - po.A_pinv[i]));
  for (size_t i = 0; i < eff.P_par.numel(); ++i) {
    maxdiff = std::max(maxdiff, std::fabs(eff.P_par.v[i] - po.P_par[i]));
    maxdiff = std::max(maxdiff, std::fabs(eff.P_perp.v[i] - po.P_perp[i]));
  }
  CHECK(maxdiff < 1e-5);

  // symmetry, idempotence, complementarity, annihilation (double arithmetic)
  auto matmul = [C](const Tensor& a, const Tensor& b) {
    std::vector<double> r(static_cast<size_t>(C) * C, 0.0);
    for (int i = 0; i < C; ++i)
      for (int t = 0; t < C; ++t) {
        const double av = a.at2(i, t);
        for (int j = 0; j < C; ++j) r[static_cast<size_t>(i) * C + j] += av * b.at2(t, j);
      }
    return r;
  };
  const auto pp = matmul(eff.P_par, eff.P_par);
  double e_idem = 0.0, e_sym = 0.0, e_comp = 0.0;
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      e_idem =
          std::max(e_idem, std::fabs(pp[static_cast<size_t>(i) * C + j] - eff.P_par.at2(i, j)));
      e_sym = std::max(e_sym, std::fabs(static_cast<double>(eff.P_par.at2(i, j)) - eff.P_par.at2(j, i)));
      e_comp = std::max(
          e_comp,
          std::fabs(static_cast<double>(eff.P_par.at2(i, j)) + eff.P_perp.at2(i, j) - (i == j ? 1.0 : 0.0)));
    }
  CHECK(e_idem < 1e-5);
  CHECK(e_sym < 1e-5);
  CHECK(e_comp < 1e-5);

  double e_annih = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < C; ++j) {
      double s = 0.0;
      for (int t = 0; t < C; ++t) s += static_cast<double>(eff.A.at2(i, t)) * eff.P_perp.at2(t, j);
      e_annih = std::max(e_annih, std::fabs(s));
    }
  CHECK(e_annih < 1e-5);
}

TEST_CASE("identity-block decoder yields the identity-block projector") {
  ArgbModel m(1, 61);
  // W1 = [I64 | 0], W2 = [I32 | 0], W3 = [I3 | 0], b = 0
  auto set_eye = [](argb::nn::Conv2d& c, int rows, int cols) {
    auto& w = c.weight().value;
    std::fill(w.v.begin(), w.v.end(), 0.0f);
    for (int i = 0; i < rows && i < cols; ++i) w.v[static_cast<size_t>(i) * cols + i] = 1.0f;
  };
  auto& d = m.decoder();
  set_eye(*static_cast<argb::nn::Conv2d*>(d.layer(0)), 64, 128);
  set_eye(*static_cast<argb::nn::Conv2d*>(d.layer(1)), 32, 64);
  auto* last = static_cast<argb::nn::Conv2d*>(d.layer(2));
  set_eye(*last, 3, 32);
  std::fill(last->bias().value.v.begin(), last->bias().value.v.end(), 0.0f);

  argb::EffectiveDecoder eff = m.effective_decoder();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 128; ++j)
      CHECK(std::fabs(eff.A.at2(i, j) - (i == j ? 1.0f : 0.0f)) < 1e-7);
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j) {
      const float want = (i == j && i < 3) ? 1.0f : 0.0f;
      CHECK(std::fabs(eff.P_par.at2(i, j) - want) < 1e-6);
    }
  CHECK(std::fabs(m.decode(Tensor({1, 128, 2, 2})).v[0]) < 1e-7);  // b = 0
}

TEST_CASE("rank-deficient effective decoder is flagged, not fatal") {
  ArgbModel m(1, 71);
  auto* last = static_cast<argb::nn::Conv2d*>(m.decoder().layer(2));
  std::fill(last->weight().value.v.begin(), last->weight().value.v.end(), 0.0f);
  argb::EffectiveDecoder eff = m.effective_decoder();
  CHECK(eff.rank == 0);
  CHECK(eff.rank_deficient);
}

TEST_CASE("encode backward routes gradients through selected experts only") {
  ArgbModel m(3, 81);
  Rng rng(8);
  Tensor x = random_image(8, 8, rng);
  EncodeCache cache;
  Tensor xi = m.encode(x, false, &cache);
  (void)xi;

  // loss = <xi, g>; finite differences through the double oracle
  Tensor g = random_tensor({1, m.embedding_dim(), 8, 8}, rng);
  Tensor dx = m.encode_backward(g, cache, true, false);

  const oracle::NaiveModel nm = oracle::NaiveModel::from(m);
  // routing is constant in backprop, so the FD oracle pins the assignment
  const std::vector<int> assign = nm.assignment(oracle::from_float(x));
  auto loss_of = [&](const std::vector<double>& xd) {
    oracle::DTensor xt(x.shape);
    xt.v = xd;
    const oracle::DTensor e = nm.encode_fixed(xt, assign);
    double s = 0.0;
    for (size_t i = 0; i < e.v.size(); ++i) s += e.v[i] * g.v[i];
    return s;
  };
  const auto fd = oracle::fd_gradient(loss_of, std::vector<double>(x.v.begin(), x.v.end()), 1e-6);
  double maxerr = 0.0;
  for (size_t i = 0; i < fd.size(); ++i)
    maxerr = std::max(maxerr, std::fabs(dx.v[i] - fd[i]));
  CHECK(maxerr < 1e-3);
}

TEST_CASE("piecewise-linear: confirmed-pattern second difference vanishes") {
  ArgbModel m(3, 91);
  Rng rng(9);
  int confirmed = 0;
  for (int trial = 0; trial < 8 && confirmed < 3; ++trial) {
    Tensor x = random_image(8, 8, rng);
    Tensor d = random_tensor({1, 3, 8, 8}, rng);
    double eps = 1e-3;
    for (int attempt = 0; attempt < 12; ++attempt, eps *= 0.5) {
      Tensor x1 = x, x2 = x;
      argb::kern::axpy(static_cast<float>(eps), d.data(), x1.data(), x1.numel());
      argb::kern::axpy(static_cast<float>(2 * eps), d.data(), x2.data(), x2.numel());
      if (testutil::max_abs_diff(x1, x) == 0.0) break;  // below float resolution
      EncodeCache c0, c1, c2;
      Tensor f0 = m.encode(x, false, &c0);
      Tensor f1 = m.encode(x1, false, &c1);
      Tensor f2 = m.encode(x2, false, &c2);
      const uint64_t h0 = argb::activation_pattern_hash(m, c0);
      if (argb::activation_pattern_hash(m, c1) != h0 ||
          argb::activation_pattern_hash(m, c2) != h0)
        continue;
      double second = 0.0;
      for (size_t i = 0; i < f0.numel(); ++i)
        second = std::max(second,
                          std::fabs(static_cast<double>(f2.v[i]) - 2.0 * f1.v[i] + f0.v[i]));
      CHECK(second < 1e-4);
      ++confirmed;
      break;
    }
  }
  CHECK(confirmed >= 1);
}

TEST_CASE("independent expert initialization, reproducible from the seed") {
  ArgbModel m(3, 100);
  auto* c0 = static_cast<argb::nn::Conv2d*>(m.expert(0).layer(0));
  auto* c1 = static_cast<argb::nn::Conv2d*>(m.expert(1).layer(0));
  CHECK(testutil::max_abs_diff(c0->weight().value, c1->weight().value) > 0.0);
  ArgbModel m2(3, 100);
  auto* c0b = static_cast<argb::nn::Conv2d*>(m2.expert(0).layer(0));
  CHECK(testutil::max_abs_diff(c0->weight().value, c0b->weight().value) == 0.0);
}

TEST_CASE("named tensors are unique and cover batch-norm statistics") {
  ArgbModel m(2, 3);
  std::set<std::string> names;
  size_t count = 0;
  for (auto& [name, t] : m.named_tensors()) {
    (void)t;
    names.insert(name);
    ++count;
  }
  CHECK(names.size() == count);
  CHECK(names.count("router.bn2.running_mean") == 1);
  CHECK(names.count("expert1.conv4.weight") == 1);
  CHECK(names.count("decoder.conv3.bias") == 1);
  CHECK(names.count("decoder.conv1.bias") == 0);  // bias-free layer
}
