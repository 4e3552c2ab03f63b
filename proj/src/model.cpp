#include "argb/model.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "argb/kernels.hpp"

namespace argb {

using nn::BatchNorm2d;
using nn::ChannelSoftmax;
using nn::Conv2d;
using nn::LeakyReLU;

namespace {
constexpr float kSlope = 0.2f;

std::unique_ptr<Conv2d> conv(int ci, int co, int k, bool bias = true) {
  return std::make_unique<Conv2d>(ci, co, k, bias);
}
std::unique_ptr<LeakyReLU> lrelu() { return std::make_unique<LeakyReLU>(kSlope); }
}  // namespace

void validate_image(const Tensor& x) {
  if (x.rank() != 4 || x.c() != 3)
    throw std::invalid_argument("expected an image tensor with 3 channels, got " + x.shape_str());
  if (!x.finite()) throw std::invalid_argument("image contains non-finite values");
}

ArgbModel::ArgbModel(int num_experts, uint64_t seed) : K_(num_experts) {
  if (K_ < 1) throw std::invalid_argument("ArgbModel: need at least one expert");

  router_.add(conv(3, 64, 3), "conv1");
  router_.add(lrelu(), "act1");
  router_.add(conv(64, 128, 3), "conv2");
  router_.add(std::make_unique<BatchNorm2d>(128), "bn2");
  router_.add(lrelu(), "act2");
  router_.add(conv(128, 256, 3), "conv3");
  router_.add(std::make_unique<BatchNorm2d>(256), "bn3");
  router_.add(lrelu(), "act3");
  router_.add(conv(256, 512, 1), "conv4");
  router_.add(std::make_unique<BatchNorm2d>(512), "bn4");
  router_.add(lrelu(), "act4");
  router_.add(conv(512, K_, 1), "conv5");
  router_.add(std::make_unique<ChannelSoftmax>(), "softmax");

  experts_.resize(static_cast<size_t>(K_));
  for (int k = 0; k < K_; ++k) {
    auto& e = experts_[static_cast<size_t>(k)];
    e.add(conv(3, 32, 3), "conv1");
    e.add(lrelu(), "act1");
    e.add(conv(32, 64, 3), "conv2");
    e.add(lrelu(), "act2");
    e.add(conv(64, 128, 3), "conv3");
    e.add(lrelu(), "act3");
    e.add(conv(128, kEmbedDim, 3), "conv4");
  }

  decoder_.add(conv(kEmbedDim, 64, 1, false), "conv1");
  decoder_.add(conv(64, 32, 1, false), "conv2");
  decoder_.add(conv(32, 3, 1, true), "conv3");

  Rng r_router = Rng::substream(seed, 1);
  router_.init(r_router);
  for (int k = 0; k < K_; ++k) {
    Rng r_k = Rng::substream(seed, 100 + static_cast<uint64_t>(k));
    experts_[static_cast<size_t>(k)].init(r_k);
  }
  Rng r_dec = Rng::substream(seed, 2);
  decoder_.init(r_dec);
}

Tensor ArgbModel::route(const Tensor& x, bool training, nn::NetCache* cache) {
  validate_image(x);
  return router_.forward(x, training, cache);
}

Tensor top1_masks(const Tensor& probs) {
  if (probs.rank() != 4) throw std::invalid_argument("top1_masks: expected N x K x H x W");
  if (!probs.finite()) throw std::invalid_argument("top1_masks: non-finite probabilities");
  const int N = probs.n(), K = probs.c(), H = probs.h(), W = probs.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor masks(probs.shape);
  for (int n = 0; n < N; ++n) {
    const float* p = probs.data() + probs.idx(n, 0, 0, 0);
    float* m = masks.data() + probs.idx(n, 0, 0, 0);
    for (size_t i = 0; i < plane; ++i) {
      int best = 0;
      float bv = p[i];
      for (int k = 1; k < K; ++k)
        if (p[k * plane + i] > bv) {
          bv = p[k * plane + i];
          best = k;
        }
      m[static_cast<size_t>(best) * plane + i] = 1.0f;
    }
  }
  return masks;
}

std::vector<int> expert_argmax(const Tensor& probs) {
  const int N = probs.n(), K = probs.c(), H = probs.h(), W = probs.w();
  const size_t plane = static_cast<size_t>(H) * W;
  std::vector<int> idx(static_cast<size_t>(N) * plane);
  for (int n = 0; n < N; ++n) {
    const float* p = probs.data() + probs.idx(n, 0, 0, 0);
    for (size_t i = 0; i < plane; ++i) {
      int best = 0;
      float bv = p[i];
      for (int k = 1; k < K; ++k)
        if (p[k * plane + i] > bv) {
          bv = p[k * plane + i];
          best = k;
        }
      idx[static_cast<size_t>(n) * plane + i] = best;
    }
  }
  return idx;
}

Tensor ArgbModel::encode(const Tensor& x, bool training, EncodeCache* cache) {
  validate_image(x);
  nn::NetCache* rc = cache ? &cache->router : nullptr;
  Tensor probs = router_.forward(x, training, rc);
  Tensor masks = top1_masks(probs);

  const int N = x.n(), H = x.h(), W = x.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor xi({N, kEmbedDim, H, W});
  if (cache) cache->experts.resize(static_cast<size_t>(K_));
  for (int k = 0; k < K_; ++k) {
    nn::NetCache* ec = cache ? &cache->experts[static_cast<size_t>(k)] : nullptr;
    Tensor ek = experts_[static_cast<size_t>(k)].forward(x, training, ec);
    for (int n = 0; n < N; ++n) {
      const float* mp = masks.data() + masks.idx(n, k, 0, 0);
      for (int ch = 0; ch < kEmbedDim; ++ch)
        kern::vfma(mp, ek.data() + ek.idx(n, ch, 0, 0), xi.data() + xi.idx(n, ch, 0, 0), plane);
    }
  }
  if (cache) {
    cache->probs = std::move(probs);
    cache->masks = std::move(masks);
  }
  return xi;
}

Tensor ArgbModel::encode_backward(const Tensor& dxi, const EncodeCache& cache, bool need_dx,
                                  bool pgrads) {
  const Tensor& masks = cache.masks;
  const int N = dxi.n(), H = dxi.h(), W = dxi.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor dx;
  if (need_dx) dx = Tensor({N, 3, H, W});
  Tensor dek(dxi.shape);
  for (int k = 0; k < K_; ++k) {
    for (int n = 0; n < N; ++n) {
      const float* mp = masks.data() + masks.idx(n, k, 0, 0);
      for (int ch = 0; ch < kEmbedDim; ++ch)
        kern::vmul(mp, dxi.data() + dxi.idx(n, ch, 0, 0), dek.data() + dek.idx(n, ch, 0, 0),
                   plane);
    }
    Tensor dxk = experts_[static_cast<size_t>(k)].backward(
        dek, cache.experts[static_cast<size_t>(k)], need_dx, pgrads);
    if (need_dx) kern::axpy(1.0f, dxk.data(), dx.data(), dx.numel());
  }
  return dx;
}

void ArgbModel::router_backward(const Tensor& dprobs, const EncodeCache& cache, bool pgrads) {
  router_.backward(dprobs, cache.router, false, pgrads);
}

Tensor ArgbModel::decode(const Tensor& xi, nn::NetCache* cache) {
  if (xi.rank() != 4 || xi.c() != kEmbedDim)
    throw std::invalid_argument("decode: expected " + std::to_string(kEmbedDim) +
                                " channels, got " + xi.shape_str());
  return decoder_.forward(xi, false, cache);
}

Tensor ArgbModel::decode_backward(const Tensor& dy, const nn::NetCache& cache, bool pgrads) {
  return decoder_.backward(dy, cache, true, pgrads);
}

std::vector<std::pair<std::string, nn::Param*>> ArgbModel::params() {
  std::vector<std::pair<std::string, nn::Param*>> out;
  router_.collect("router", out);
  for (int k = 0; k < K_; ++k)
    experts_[static_cast<size_t>(k)].collect("expert" + std::to_string(k), out);
  decoder_.collect("decoder", out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ArgbModel::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, p] : params()) out.emplace_back(name, &p->value);
  for (size_t i = 0; i < router_.size(); ++i)
    if (auto* bn = dynamic_cast<BatchNorm2d*>(router_.layer(i))) {
      out.emplace_back("router." + router_.name(i) + ".running_mean", &bn->running_mean());
      out.emplace_back("router." + router_.name(i) + ".running_var", &bn->running_var());
    }
  return out;
}

// ---- effective decoder ----

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
/// Columns of `vec` are the eigenvectors.
void jacobi3(double a[3][3], double val[3], double vec[3][3]) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) vec[i][j] = (i == j) ? 1.0 : 0.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int i = 0; i < 3; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (int j = 0; j < 3; ++j) {
          const double apj = a[p][j], aqj = a[q][j];
          a[p][j] = c * apj - s * aqj;
          a[q][j] = s * apj + c * aqj;
        }
        for (int i = 0; i < 3; ++i) {
          const double vip = vec[i][p], viq = vec[i][q];
          vec[i][p] = c * vip - s * viq;
          vec[i][q] = s * vip + c * viq;
        }
      }
  }
  for (int i = 0; i < 3; ++i) val[i] = a[i][i];
}

}  // namespace

EffectiveDecoder ArgbModel::effective_decoder() {
  const auto& w1 = static_cast<Conv2d*>(decoder_.layer(0))->weight().value;  // 64 x C
  const auto& w2 = static_cast<Conv2d*>(decoder_.layer(1))->weight().value;  // 32 x 64
  auto& w3c = *static_cast<Conv2d*>(decoder_.layer(2));
  const auto& w3 = w3c.weight().value;  // 3 x 32
  const int C = kEmbedDim;

  // A = W3 * W2 * W1, accumulated in double
  std::vector<double> t21(static_cast<size_t>(32) * C, 0.0);  // W2*W1
  for (int i = 0; i < 32; ++i)
    for (int a = 0; a < 64; ++a) {
      const double w2ia = w2.v[static_cast<size_t>(i) * 64 + a];
      for (int j = 0; j < C; ++j)
        t21[static_cast<size_t>(i) * C + j] += w2ia * w1.v[static_cast<size_t>(a) * C + j];
    }
  std::vector<double> Ad(static_cast<size_t>(3) * C, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 32; ++a) {
      const double w3ia = w3.v[static_cast<size_t>(i) * 32 + a];
      for (int j = 0; j < C; ++j)
        Ad[static_cast<size_t>(i) * C + j] += w3ia * t21[static_cast<size_t>(a) * C + j];
    }

  EffectiveDecoder eff;
  eff.A = Tensor({3, C});
  for (size_t i = 0; i < Ad.size(); ++i) eff.A.v[i] = static_cast<float>(Ad[i]);
  eff.b = Tensor({3});
  eff.b.v = w3c.bias().value.v;

  // Pseudoinverse by SVD of A via the 3x3 Gram matrix: A = U S V^T with
  // A A^T = U S^2 U^T, so A+ = A^T U S^-2 U^T restricted to singular values
  // above rtol * s_max (rtol = 1e-6).
  double m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int t = 0; t < C; ++t)
        s += Ad[static_cast<size_t>(i) * C + t] * Ad[static_cast<size_t>(j) * C + t];
      m[i][j] = s;
    }
  double val[3], vec[3][3];
  jacobi3(m, val, vec);
  double smax = 0.0;
  for (double lv : val) smax = std::max(smax, std::sqrt(std::max(lv, 0.0)));
  const double cutoff = 1e-6 * smax;

  // Minv = sum_i u_i u_i^T / lambda_i over retained modes
  double minv[3][3] = {};
  eff.rank = 0;
  for (int e = 0; e < 3; ++e) {
    const double sv = std::sqrt(std::max(val[e], 0.0));
    if (sv <= cutoff || sv == 0.0) continue;
    ++eff.rank;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) minv[i][j] += vec[i][e] * vec[j][e] / val[e];
  }
  eff.rank_deficient = eff.rank < 3;

  eff.A_pinv = Tensor({C, 3});
  std::vector<double> pinv_d(static_cast<size_t>(C) * 3, 0.0);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int t = 0; t < 3; ++t) s += Ad[static_cast<size_t>(t) * C + i] * minv[t][j];
      pinv_d[static_cast<size_t>(i) * 3 + j] = s;
      eff.A_pinv.v[static_cast<size_t>(i) * 3 + j] = static_cast<float>(s);
    }

  eff.P_par = Tensor({C, C});
  eff.P_perp = Tensor({C, C});
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      double s = 0.0;
      for (int t = 0; t < 3; ++t)
        s += pinv_d[static_cast<size_t>(i) * 3 + t] * Ad[static_cast<size_t>(t) * C + j];
      eff.P_par.v[static_cast<size_t>(i) * C + j] = static_cast<float>(s);
      eff.P_perp.v[static_cast<size_t>(i) * C + j] = static_cast<float>((i == j ? 1.0 : 0.0) - s);
    }
  return eff;
}

void EffectiveDecoder::apply(const float* v, float* y3) const {
  const int C = A.size(1);
  for (int i = 0; i < 3; ++i) {
    double s = b.v[static_cast<size_t>(i)];
    const float* row = A.data() + static_cast<size_t>(i) * C;
    for (int j = 0; j < C; ++j) s += static_cast<double>(row[j]) * v[j];
    y3[i] = static_cast<float>(s);
  }
}

uint64_t activation_pattern_hash(ArgbModel& model, const EncodeCache& cache) {
  // The encoder output depends on the router only through the argmax, so
  // the linear region is determined by the expert rectifier signs plus the
  // per-pixel expert assignment.
  uint64_t h = 1469598103934665603ull;
  auto mix_bit = [&h](int bit) {
    h ^= static_cast<uint64_t>(bit);
    h *= 1099511628211ull;
  };
  auto mix_net = [&](nn::Sequential& net, const nn::NetCache& nc) {
    for (size_t i = 0; i < net.size(); ++i)
      if (dynamic_cast<nn::LeakyReLU*>(net.layer(i)))
        for (float x : nc[i].a.v) mix_bit(x > 0.0f ? 1 : 0);
  };
  for (int k = 0; k < model.num_experts(); ++k)
    mix_net(model.expert(k), cache.experts[static_cast<size_t>(k)]);
  for (int v : expert_argmax(cache.probs)) mix_bit(v);
  return h;
}

}  // namespace argb
