// Reference kernels. Every output element is accumulated in (ci, dy, dx)
// order with fused multiply-add, the same order the SIMD variants use per
// lane, so the variants agree to the last bit on typical inputs.

#include <cmath>
#include <cstddef>

#include "kernels_common.hpp"

namespace argb::kern::scalar_impl {

namespace {

void conv2d_fwd(const float* in, const float* w, const float* bias, float* out,
                int N, int Ci, int Co, int H, int W, int k) {
  const int pad = k / 2;
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  float* padded = scratch(0, static_cast<size_t>(Ci) * Hp * Wp);
  for (int n = 0; n < N; ++n) {
    pad_planes(in + static_cast<size_t>(n) * Ci * H * W, padded, Ci, H, W, pad);
    for (int co = 0; co < Co; ++co) {
      const float bval = bias ? bias[co] : 0.0f;
      float* op = out + ((static_cast<size_t>(n) * Co) + co) * H * W;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          float acc = bval;
          for (int ci = 0; ci < Ci; ++ci) {
            const float* ip = padded + (static_cast<size_t>(ci) * Hp + y) * Wp + x;
            const float* wp = w + ((static_cast<size_t>(co) * Ci) + ci) * k * k;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                acc = std::fma(ip[dy * Wp + dx], wp[dy * k + dx], acc);
          }
          op[static_cast<size_t>(y) * W + x] = acc;
        }
      }
    }
  }
}

void conv2d_bwd_input(const float* dout, const float* w, float* din,
                      int N, int Ci, int Co, int H, int W, int k) {
  float* wt = scratch(1, static_cast<size_t>(Ci) * Co * k * k);
  transpose_rotate(w, wt, Ci, Co, k);
  conv2d_fwd(dout, wt, nullptr, din, N, Co, Ci, H, W, k);
}

void conv2d_bwd_params(const float* in, const float* dout, float* dw, float* db,
                       int N, int Ci, int Co, int H, int W, int k) {
  const int pad = k / 2;
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  float* padded = scratch(0, static_cast<size_t>(Ci) * Hp * Wp);
  for (int n = 0; n < N; ++n) {
    pad_planes(in + static_cast<size_t>(n) * Ci * H * W, padded, Ci, H, W, pad);
    for (int co = 0; co < Co; ++co) {
      const float* gp = dout + ((static_cast<size_t>(n) * Co) + co) * H * W;
      if (db) {
        double s = 0.0;
        for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) s += gp[i];
        db[co] += static_cast<float>(s);
      }
      for (int ci = 0; ci < Ci; ++ci) {
        const float* ip = padded + static_cast<size_t>(ci) * Hp * Wp;
        float* wp = dw + ((static_cast<size_t>(co) * Ci) + ci) * k * k;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            float acc = 0.0f;
            for (int y = 0; y < H; ++y) {
              const float* irow = ip + (static_cast<size_t>(y) + dy) * Wp + dx;
              const float* grow = gp + static_cast<size_t>(y) * W;
              for (int x = 0; x < W; ++x) acc = std::fma(irow[x], grow[x], acc);
            }
            wp[dy * k + dx] += acc;
          }
      }
    }
  }
}

void leaky_relu_fwd(const float* x, float* y, float slope, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const float* x, const float* dy, float* dx, float slope, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void axpy(float a, const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(float a, float* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void vsub(const float* a, const float* b, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void vmul(const float* a, const float* b, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void vfma(const float* a, const float* b, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

double sum(const float* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_abs(const float* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double sum_sq(const float* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
  return s;
}

double sum_abs_diff(const float* a, const float* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(a[i]) - b[i]);
  return s;
}

double sum_sq_diff(const float* a, const float* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

float max_abs(const float* x, size_t n) {
  float m = 0.0f;
  for (size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

}  // namespace

const Ops ops = {conv2d_fwd, conv2d_bwd_input, conv2d_bwd_params,
                 leaky_relu_fwd, leaky_relu_bwd, axpy, scale, vsub, vmul, vfma,
                 sum, sum_abs, sum_sq, sum_abs_diff, sum_sq_diff, max_abs};

}  // namespace argb::kern::scalar_impl
