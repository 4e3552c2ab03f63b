#include "argb/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "argb/kernels.hpp"

namespace argb::nn {

// ---- Conv2d ----

Conv2d::Conv2d(int in_ch, int out_ch, int k, bool bias)
    : in_ch_(in_ch), out_ch_(out_ch), k_(k), has_bias_(bias) {
  if (k != 1 && k != 3) throw std::invalid_argument("Conv2d: kernel size must be 1 or 3");
  w_.value = Tensor({out_ch, in_ch, k, k});
  w_.grad = Tensor(w_.value.shape);
  if (has_bias_) {
    b_.value = Tensor({out_ch});
    b_.grad = Tensor(b_.value.shape);
  }
}

void Conv2d::init(Rng& rng) {
  // Kaiming-uniform with a=sqrt(5) collapses to U(+-1/sqrt(fan_in)) for the
  // weight; the bias uses the same bound.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch_) * k_ * k_);
  for (auto& x : w_.value.v) x = static_cast<float>(rng.uniform(-bound, bound));
  if (has_bias_)
    for (auto& x : b_.value.v) x = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Conv2d::forward(const Tensor& x, bool, LayerCache* c) {
  if (x.c() != in_ch_) throw std::invalid_argument("Conv2d: channel mismatch");
  Tensor y({x.n(), out_ch_, x.h(), x.w()});
  kern::conv2d_fwd(x.data(), w_.value.data(), has_bias_ ? b_.value.data() : nullptr, y.data(),
                   x.n(), in_ch_, out_ch_, x.h(), x.w(), k_);
  if (c) c->a = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) {
  const Tensor& x = c.a;
  if (pgrads)
    kern::conv2d_bwd_params(x.data(), dy.data(), w_.grad.data(),
                            has_bias_ ? b_.grad.data() : nullptr,
                            x.n(), in_ch_, out_ch_, x.h(), x.w(), k_);
  Tensor dx;
  if (need_dx) {
    dx = Tensor(x.shape);
    kern::conv2d_bwd_input(dy.data(), w_.value.data(), dx.data(),
                           x.n(), in_ch_, out_ch_, x.h(), x.w(), k_);
  }
  return dx;
}

void Conv2d::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".weight", &w_);
  if (has_bias_) out.emplace_back(prefix + ".bias", &b_);
}

// ---- BatchNorm2d ----

BatchNorm2d::BatchNorm2d(int ch) : ch_(ch) {
  gamma_.value = Tensor({ch}, 1.0f);
  gamma_.grad = Tensor({ch});
  beta_.value = Tensor({ch});
  beta_.grad = Tensor({ch});
  run_mean_ = Tensor({ch});
  run_var_ = Tensor({ch}, 1.0f);
}

void BatchNorm2d::init(Rng&) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training, LayerCache* c) {
  if (x.c() != ch_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  const int N = x.n(), H = x.h(), W = x.w();
  const size_t plane = static_cast<size_t>(H) * W;
  const double m = static_cast<double>(N) * plane;

  Tensor y(x.shape);
  Tensor invstd({ch_});
  Tensor xhat;
  if (c) xhat = Tensor(x.shape);

  for (int ch = 0; ch < ch_; ++ch) {
    double mean, var;
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* p = x.data() + x.idx(n, ch, 0, 0);
        s += kern::sum(p, plane);
        s2 += kern::sum_sq(p, plane);
      }
      mean = s / m;
      var = s2 / m - mean * mean;
      if (var < 0.0) var = 0.0;
      run_mean_.v[ch] = static_cast<float>((1.0 - momentum_) * run_mean_.v[ch] + momentum_ * mean);
      const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
      run_var_.v[ch] = static_cast<float>((1.0 - momentum_) * run_var_.v[ch] + momentum_ * unbiased);
    } else {
      mean = run_mean_.v[ch];
      var = run_var_.v[ch];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
    invstd.v[ch] = inv;
    const float g = gamma_.value.v[ch], b = beta_.value.v[ch], mu = static_cast<float>(mean);
    for (int n = 0; n < N; ++n) {
      const float* p = x.data() + x.idx(n, ch, 0, 0);
      float* q = y.data() + x.idx(n, ch, 0, 0);
      float* xh = c ? xhat.data() + x.idx(n, ch, 0, 0) : nullptr;
      for (size_t i = 0; i < plane; ++i) {
        const float h = (p[i] - mu) * inv;
        if (xh) xh[i] = h;
        q[i] = g * h + b;
      }
    }
  }
  if (c) {
    c->a = std::move(xhat);
    c->b = std::move(invstd);
    c->flag = training ? 1 : 0;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) {
  const Tensor& xhat = c.a;
  const int N = dy.n(), H = dy.h(), W = dy.w();
  const size_t plane = static_cast<size_t>(H) * W;
  const double m = static_cast<double>(N) * plane;
  Tensor dx;
  if (need_dx) dx = Tensor(dy.shape);

  for (int ch = 0; ch < ch_; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const float* g = dy.data() + dy.idx(n, ch, 0, 0);
      const float* xh = xhat.data() + dy.idx(n, ch, 0, 0);
      for (size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
      }
    }
    if (pgrads) {
      beta_.grad.v[ch] += static_cast<float>(sum_dy);
      gamma_.grad.v[ch] += static_cast<float>(sum_dy_xhat);
    }
    if (need_dx) {
      const float gmm = gamma_.value.v[ch] * c.b.v[ch];
      if (c.flag) {
        const float k1 = static_cast<float>(sum_dy / m);
        const float k2 = static_cast<float>(sum_dy_xhat / m);
        for (int n = 0; n < N; ++n) {
          const float* g = dy.data() + dy.idx(n, ch, 0, 0);
          const float* xh = xhat.data() + dy.idx(n, ch, 0, 0);
          float* d = dx.data() + dy.idx(n, ch, 0, 0);
          for (size_t i = 0; i < plane; ++i) d[i] = gmm * (g[i] - k1 - xh[i] * k2);
        }
      } else {
        // frozen statistics: plain per-channel scaling
        for (int n = 0; n < N; ++n) {
          const float* g = dy.data() + dy.idx(n, ch, 0, 0);
          float* d = dx.data() + dy.idx(n, ch, 0, 0);
          for (size_t i = 0; i < plane; ++i) d[i] = gmm * g[i];
        }
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix,
                          std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".gamma", &gamma_);
  out.emplace_back(prefix + ".beta", &beta_);
}

// ---- LeakyReLU ----

Tensor LeakyReLU::forward(const Tensor& x, bool, LayerCache* c) {
  Tensor y(x.shape);
  kern::leaky_relu_fwd(x.data(), y.data(), slope_, x.numel());
  if (c) c->a = x;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool) {
  Tensor dx;
  if (need_dx) {
    dx = Tensor(dy.shape);
    kern::leaky_relu_bwd(c.a.data(), dy.data(), dx.data(), slope_, dy.numel());
  }
  return dx;
}

// ---- ChannelSoftmax ----

Tensor ChannelSoftmax::forward(const Tensor& x, bool, LayerCache* c) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor y(x.shape);
  for (int n = 0; n < N; ++n) {
    const float* xp = x.data() + x.idx(n, 0, 0, 0);
    float* yp = y.data() + x.idx(n, 0, 0, 0);
    for (size_t i = 0; i < plane; ++i) {
      float mx = xp[i];
      for (int ch = 1; ch < C; ++ch) mx = std::max(mx, xp[ch * plane + i]);
      float denom = 0.0f;
      for (int ch = 0; ch < C; ++ch) {
        const float e = std::exp(xp[ch * plane + i] - mx);
        yp[ch * plane + i] = e;
        denom += e;
      }
      const float inv = 1.0f / denom;
      for (int ch = 0; ch < C; ++ch) yp[ch * plane + i] *= inv;
    }
  }
  if (c) c->a = y;
  return y;
}

Tensor ChannelSoftmax::backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool) {
  if (!need_dx) return Tensor();
  const Tensor& y = c.a;
  const int N = dy.n(), C = dy.c(), H = dy.h(), W = dy.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor dx(dy.shape);
  for (int n = 0; n < N; ++n) {
    const float* gp = dy.data() + dy.idx(n, 0, 0, 0);
    const float* yp = y.data() + dy.idx(n, 0, 0, 0);
    float* dp = dx.data() + dy.idx(n, 0, 0, 0);
    for (size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (int ch = 0; ch < C; ++ch)
        dot += static_cast<double>(gp[ch * plane + i]) * yp[ch * plane + i];
      for (int ch = 0; ch < C; ++ch)
        dp[ch * plane + i] =
            yp[ch * plane + i] * (gp[ch * plane + i] - static_cast<float>(dot));
    }
  }
  return dx;
}

// ---- optimizer & helpers ----

void Adam::step(const std::vector<std::pair<std::string, Param*>>& params, double lr) {
  if (m.empty()) {
    for (auto& [name, p] : params) {
      m.emplace_back(p->value.shape);
      v.emplace_back(p->value.shape);
    }
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i].second;
    float* mv = m[i].data();
    float* vv = v[i].data();
    const float* g = p->grad.data();
    float* x = p->value.data();
    const size_t n = p->value.numel();
    for (size_t j = 0; j < n; ++j) {
      mv[j] = static_cast<float>(beta1_ * mv[j] + (1.0 - beta1_) * g[j]);
      vv[j] = static_cast<float>(beta2_ * vv[j] + (1.0 - beta2_) * static_cast<double>(g[j]) * g[j]);
      const double mhat = mv[j] / bc1;
      const double vhat = vv[j] / bc2;
      x[j] = static_cast<float>(x[j] - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void zero_grads(const std::vector<std::pair<std::string, Param*>>& params) {
  for (auto& [name, p] : params) std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0f);
}

uint64_t param_hash(const std::vector<std::pair<std::string, Param*>>& params) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (auto& [name, p] : params) {
    mix(name.data(), name.size());
    mix(p->value.data(), p->value.numel() * sizeof(float));
  }
  return h;
}

void clip_grad_inf_norm(const std::vector<std::pair<std::string, Param*>>& params, double clip) {
  float mx = 0.0f;
  for (auto& [name, p] : params)
    mx = std::max(mx, kern::max_abs(p->grad.data(), p->grad.numel()));
  if (mx > clip && mx > 0.0f) {
    const float s = static_cast<float>(clip / mx);
    for (auto& [name, p] : params) kern::scale(s, p->grad.data(), p->grad.numel());
  }
}

}  // namespace argb::nn
