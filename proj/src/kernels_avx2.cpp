// AVX2+FMA kernel variant. Register blocking: 4 output channels x 16 pixels
// for the forward/input-gradient convolutions, 8-wide rows for the weight
// gradient. Per-lane accumulation order matches the scalar reference.

#include <cmath>
#include <cstddef>

#include "kernels_common.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define ARGB_HAVE_AVX2 1
#endif

namespace argb::kern::avx2_impl {

#if ARGB_HAVE_AVX2

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

template <int K>
void conv_fwd_t(const float* in, const float* w, const float* bias, float* out,
                int N, int Ci, int Co, int H, int W) {
  constexpr int pad = K / 2;
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  constexpr int coB = 4;
  for (int n = 0; n < N; ++n) {
    const float* src = in + static_cast<size_t>(n) * Ci * H * W;
    if (pad) {
      float* padded = scratch(0, static_cast<size_t>(Ci) * Hp * Wp);
      pad_planes(src, padded, Ci, H, W, pad);
      src = padded;
    }
    for (int co0 = 0; co0 < Co; co0 += coB) {
      const int ncb = (co0 + coB <= Co) ? coB : (Co - co0);
      for (int y = 0; y < H; ++y) {
        int x0 = 0;
        for (; x0 + 16 <= W; x0 += 16) {
          __m256 acc[coB][2];
          for (int c = 0; c < ncb; ++c)
            acc[c][0] = acc[c][1] = _mm256_set1_ps(bias ? bias[co0 + c] : 0.0f);
          for (int ci = 0; ci < Ci; ++ci) {
            const float* rowb = src + (static_cast<size_t>(ci) * Hp + y) * Wp + x0;
            const float* wp = w + (static_cast<size_t>(co0) * Ci + ci) * K * K;
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx) {
                const __m256 v0 = _mm256_loadu_ps(rowb + dy * Wp + dx);
                const __m256 v1 = _mm256_loadu_ps(rowb + dy * Wp + dx + 8);
                for (int c = 0; c < ncb; ++c) {
                  const __m256 wv =
                      _mm256_set1_ps(wp[static_cast<size_t>(c) * Ci * K * K + dy * K + dx]);
                  acc[c][0] = _mm256_fmadd_ps(v0, wv, acc[c][0]);
                  acc[c][1] = _mm256_fmadd_ps(v1, wv, acc[c][1]);
                }
              }
          }
          for (int c = 0; c < ncb; ++c) {
            float* op = out + ((static_cast<size_t>(n) * Co + co0 + c) * H + y) * W + x0;
            _mm256_storeu_ps(op, acc[c][0]);
            _mm256_storeu_ps(op + 8, acc[c][1]);
          }
        }
        for (; x0 + 8 <= W; x0 += 8) {
          __m256 acc[coB];
          for (int c = 0; c < ncb; ++c) acc[c] = _mm256_set1_ps(bias ? bias[co0 + c] : 0.0f);
          for (int ci = 0; ci < Ci; ++ci) {
            const float* rowb = src + (static_cast<size_t>(ci) * Hp + y) * Wp + x0;
            const float* wp = w + (static_cast<size_t>(co0) * Ci + ci) * K * K;
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx) {
                const __m256 v0 = _mm256_loadu_ps(rowb + dy * Wp + dx);
                for (int c = 0; c < ncb; ++c) {
                  const __m256 wv =
                      _mm256_set1_ps(wp[static_cast<size_t>(c) * Ci * K * K + dy * K + dx]);
                  acc[c] = _mm256_fmadd_ps(v0, wv, acc[c]);
                }
              }
          }
          for (int c = 0; c < ncb; ++c)
            _mm256_storeu_ps(out + ((static_cast<size_t>(n) * Co + co0 + c) * H + y) * W + x0,
                             acc[c]);
        }
        for (; x0 < W; ++x0) {
          for (int c = 0; c < ncb; ++c) {
            float acc = bias ? bias[co0 + c] : 0.0f;
            for (int ci = 0; ci < Ci; ++ci) {
              const float* ip = src + (static_cast<size_t>(ci) * Hp + y) * Wp + x0;
              const float* wp = w + (static_cast<size_t>(co0 + c) * Ci + ci) * K * K;
              for (int dy = 0; dy < K; ++dy)
                for (int dx = 0; dx < K; ++dx)
                  acc = std::fma(ip[dy * Wp + dx], wp[dy * K + dx], acc);
            }
            out[((static_cast<size_t>(n) * Co + co0 + c) * H + y) * W + x0] = acc;
          }
        }
      }
    }
  }
}

void conv2d_fwd(const float* in, const float* w, const float* bias, float* out,
                int N, int Ci, int Co, int H, int W, int k) {
  if (k == 3)
    conv_fwd_t<3>(in, w, bias, out, N, Ci, Co, H, W);
  else
    conv_fwd_t<1>(in, w, bias, out, N, Ci, Co, H, W);
}

void conv2d_bwd_input(const float* dout, const float* w, float* din,
                      int N, int Ci, int Co, int H, int W, int k) {
  float* wt = scratch(1, static_cast<size_t>(Ci) * Co * k * k);
  transpose_rotate(w, wt, Ci, Co, k);
  conv2d_fwd(dout, wt, nullptr, din, N, Co, Ci, H, W, k);
}

template <int K>
void conv_bwd_params_t(const float* in, const float* dout, float* dw, float* db,
                       int N, int Ci, int Co, int H, int W) {
  constexpr int pad = K / 2;
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  for (int n = 0; n < N; ++n) {
    const float* src = in + static_cast<size_t>(n) * Ci * H * W;
    if (pad) {
      float* padded = scratch(0, static_cast<size_t>(Ci) * Hp * Wp);
      pad_planes(src, padded, Ci, H, W, pad);
      src = padded;
    }
    for (int co = 0; co < Co; ++co) {
      const float* gp = dout + (static_cast<size_t>(n) * Co + co) * H * W;
      if (db) {
        __m256 s = _mm256_setzero_ps();
        size_t i = 0;
        const size_t hw = static_cast<size_t>(H) * W;
        for (; i + 8 <= hw; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(gp + i));
        float tail = 0.0f;
        for (; i < hw; ++i) tail += gp[i];
        db[co] += hsum(s) + tail;
      }
      for (int ci = 0; ci < Ci; ++ci) {
        const float* ip = src + static_cast<size_t>(ci) * Hp * Wp;
        __m256 acc[K * K];
        for (auto& a : acc) a = _mm256_setzero_ps();
        float accs[K * K] = {};
        for (int y = 0; y < H; ++y) {
          const float* grow = gp + static_cast<size_t>(y) * W;
          const float* irow = ip + static_cast<size_t>(y) * Wp;
          int x0 = 0;
          for (; x0 + 8 <= W; x0 += 8) {
            const __m256 g = _mm256_loadu_ps(grow + x0);
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx)
                acc[dy * K + dx] =
                    _mm256_fmadd_ps(_mm256_loadu_ps(irow + dy * Wp + x0 + dx), g, acc[dy * K + dx]);
          }
          for (; x0 < W; ++x0)
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx)
                accs[dy * K + dx] = std::fma(irow[dy * Wp + x0 + dx], grow[x0], accs[dy * K + dx]);
        }
        float* wp = dw + (static_cast<size_t>(co) * Ci + ci) * K * K;
        for (int t = 0; t < K * K; ++t) wp[t] += hsum(acc[t]) + accs[t];
      }
    }
  }
}

void conv2d_bwd_params(const float* in, const float* dout, float* dw, float* db,
                       int N, int Ci, int Co, int H, int W, int k) {
  if (k == 3)
    conv_bwd_params_t<3>(in, dout, dw, db, N, Ci, Co, H, W);
  else
    conv_bwd_params_t<1>(in, dout, dw, db, N, Ci, Co, H, W);
}

void leaky_relu_fwd(const float* x, float* y, float slope, size_t n) {
  const __m256 sl = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 neg = _mm256_mul_ps(v, sl);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, v, _mm256_cmp_ps(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const float* x, const float* dy, float* dx, float slope, size_t n) {
  const __m256 sl = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 g = _mm256_loadu_ps(dy + i);
    const __m256 neg = _mm256_mul_ps(g, sl);
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(neg, g, _mm256_cmp_ps(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void axpy(float a, const float* x, float* y, size_t n) {
  const __m256 av = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(float a, float* x, size_t n) {
  const __m256 av = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vsub(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void vmul(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void vfma(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

const __m256 kAbsMask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7FFFFFFF));

double sum(const float* x, size_t n) {
  __m256 s = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(x + i));
  double r = hsum(s);
  for (; i < n; ++i) r += x[i];
  return r;
}

double sum_abs(const float* x, size_t n) {
  __m256 s = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_and_ps(kAbsMask, _mm256_loadu_ps(x + i)));
  double r = hsum(s);
  for (; i < n; ++i) r += std::fabs(x[i]);
  return r;
}

double sum_sq(const float* x, size_t n) {
  __m256 s = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    s = _mm256_fmadd_ps(v, v, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) r += static_cast<double>(x[i]) * x[i];
  return r;
}

double sum_abs_diff(const float* a, const float* b, size_t n) {
  __m256 s = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    s = _mm256_add_ps(s, _mm256_and_ps(kAbsMask, d));
  }
  double r = hsum(s);
  for (; i < n; ++i) r += std::fabs(static_cast<double>(a[i]) - b[i]);
  return r;
}

double sum_sq_diff(const float* a, const float* b, size_t n) {
  __m256 s = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    s = _mm256_fmadd_ps(d, d, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    r += d * d;
  }
  return r;
}

float max_abs(const float* x, size_t n) {
  __m256 m = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) m = _mm256_max_ps(m, _mm256_and_ps(kAbsMask, _mm256_loadu_ps(x + i)));
  __m128 lo = _mm_max_ps(_mm256_castps256_ps128(m), _mm256_extractf128_ps(m, 1));
  lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  float r = _mm_cvtss_f32(lo);
  for (; i < n; ++i) r = std::max(r, std::fabs(x[i]));
  return r;
}

}  // namespace

const Ops ops = {conv2d_fwd, conv2d_bwd_input, conv2d_bwd_params,
                 leaky_relu_fwd, leaky_relu_bwd, axpy, scale, vsub, vmul, vfma,
                 sum, sum_abs, sum_sq, sum_abs_diff, sum_sq_diff, max_abs};

#else  // non-x86 fallback: route to the scalar reference.

const Ops ops = scalar_impl::ops;

#endif

}  // namespace argb::kern::avx2_impl
