// AVX-512F kernel variant. Same blocking scheme as the AVX2 file with
// 16-lane vectors: 4 output channels x 32 pixels in the convolution hot
// loop. Per-lane accumulation order matches the scalar reference.

#include <cmath>
#include <cstddef>

#include "kernels_common.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define ARGB_HAVE_AVX512 1
#endif

namespace argb::kern::avx512_impl {

#if ARGB_HAVE_AVX512

namespace {

inline float hsum(__m512 v) { return _mm512_reduce_add_ps(v); }

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
        for (; x0 + 32 <= W; x0 += 32) {
          __m512 acc[coB][2];
          for (int c = 0; c < ncb; ++c)
            acc[c][0] = acc[c][1] = _mm512_set1_ps(bias ? bias[co0 + c] : 0.0f);
          for (int ci = 0; ci < Ci; ++ci) {
            const float* rowb = src + (static_cast<size_t>(ci) * Hp + y) * Wp + x0;
            const float* wp = w + (static_cast<size_t>(co0) * Ci + ci) * K * K;
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx) {
                const __m512 v0 = _mm512_loadu_ps(rowb + dy * Wp + dx);
                const __m512 v1 = _mm512_loadu_ps(rowb + dy * Wp + dx + 16);
                for (int c = 0; c < ncb; ++c) {
                  const __m512 wv =
                      _mm512_set1_ps(wp[static_cast<size_t>(c) * Ci * K * K + dy * K + dx]);
                  acc[c][0] = _mm512_fmadd_ps(v0, wv, acc[c][0]);
                  acc[c][1] = _mm512_fmadd_ps(v1, wv, acc[c][1]);
                }
              }
          }
          for (int c = 0; c < ncb; ++c) {
            float* op = out + ((static_cast<size_t>(n) * Co + co0 + c) * H + y) * W + x0;
            _mm512_storeu_ps(op, acc[c][0]);
            _mm512_storeu_ps(op + 16, acc[c][1]);
          }
        }
        for (; x0 + 16 <= W; x0 += 16) {
          __m512 acc[coB];
          for (int c = 0; c < ncb; ++c) acc[c] = _mm512_set1_ps(bias ? bias[co0 + c] : 0.0f);
          for (int ci = 0; ci < Ci; ++ci) {
            const float* rowb = src + (static_cast<size_t>(ci) * Hp + y) * Wp + x0;
            const float* wp = w + (static_cast<size_t>(co0) * Ci + ci) * K * K;
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx) {
                const __m512 v0 = _mm512_loadu_ps(rowb + dy * Wp + dx);
                for (int c = 0; c < ncb; ++c) {
                  const __m512 wv =
                      _mm512_set1_ps(wp[static_cast<size_t>(c) * Ci * K * K + dy * K + dx]);
                  acc[c] = _mm512_fmadd_ps(v0, wv, acc[c]);
                }
              }
          }
          for (int c = 0; c < ncb; ++c)
            _mm512_storeu_ps(out + ((static_cast<size_t>(n) * Co + co0 + c) * H + y) * W + x0,
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
        __m512 s = _mm512_setzero_ps();
        size_t i = 0;
        const size_t hw = static_cast<size_t>(H) * W;
        for (; i + 16 <= hw; i += 16) s = _mm512_add_ps(s, _mm512_loadu_ps(gp + i));
        float tail = 0.0f;
        for (; i < hw; ++i) tail += gp[i];
        db[co] += hsum(s) + tail;
      }
      for (int ci = 0; ci < Ci; ++ci) {
        const float* ip = src + static_cast<size_t>(ci) * Hp * Wp;
        __m512 acc[K * K];
        for (auto& a : acc) a = _mm512_setzero_ps();
        float accs[K * K] = {};
        for (int y = 0; y < H; ++y) {
          const float* grow = gp + static_cast<size_t>(y) * W;
          const float* irow = ip + static_cast<size_t>(y) * Wp;
          int x0 = 0;
          for (; x0 + 16 <= W; x0 += 16) {
            const __m512 g = _mm512_loadu_ps(grow + x0);
            for (int dy = 0; dy < K; ++dy)
              for (int dx = 0; dx < K; ++dx)
                acc[dy * K + dx] =
                    _mm512_fmadd_ps(_mm512_loadu_ps(irow + dy * Wp + x0 + dx), g, acc[dy * K + dx]);
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
  const __m512 sl = _mm512_set1_ps(slope);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    const __mmask16 pos = _mm512_cmp_ps_mask(v, _mm512_setzero_ps(), _CMP_GT_OQ);
    _mm512_storeu_ps(y + i, _mm512_mask_mov_ps(_mm512_mul_ps(v, sl), pos, v));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const float* x, const float* dy, float* dx, float slope, size_t n) {
  const __m512 sl = _mm512_set1_ps(slope);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    const __m512 g = _mm512_loadu_ps(dy + i);
    const __mmask16 pos = _mm512_cmp_ps_mask(v, _mm512_setzero_ps(), _CMP_GT_OQ);
    _mm512_storeu_ps(dx + i, _mm512_mask_mov_ps(_mm512_mul_ps(g, sl), pos, g));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void axpy(float a, const float* x, float* y, size_t n) {
  const __m512 av = _mm512_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(float a, float* x, size_t n) {
  const __m512 av = _mm512_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(x + i, _mm512_mul_ps(av, _mm512_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vsub(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_sub_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void vmul(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_mul_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void vfma(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(
        y + i, _mm512_fmadd_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i), _mm512_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

double sum(const float* x, size_t n) {
  __m512 s = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) s = _mm512_add_ps(s, _mm512_loadu_ps(x + i));
  double r = hsum(s);
  for (; i < n; ++i) r += x[i];
  return r;
}

double sum_abs(const float* x, size_t n) {
  __m512 s = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) s = _mm512_add_ps(s, _mm512_abs_ps(_mm512_loadu_ps(x + i)));
  double r = hsum(s);
  for (; i < n; ++i) r += std::fabs(x[i]);
  return r;
}

double sum_sq(const float* x, size_t n) {
  __m512 s = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    s = _mm512_fmadd_ps(v, v, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) r += static_cast<double>(x[i]) * x[i];
  return r;
}

double sum_abs_diff(const float* a, const float* b, size_t n) {
  __m512 s = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 d = _mm512_sub_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i));
    s = _mm512_add_ps(s, _mm512_abs_ps(d));
  }
  double r = hsum(s);
  for (; i < n; ++i) r += std::fabs(static_cast<double>(a[i]) - b[i]);
  return r;
}

double sum_sq_diff(const float* a, const float* b, size_t n) {
  __m512 s = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 d = _mm512_sub_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i));
    s = _mm512_fmadd_ps(d, d, s);
  }
  double r = hsum(s);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    r += d * d;
  }
  return r;
}

float max_abs(const float* x, size_t n) {
  __m512 m = _mm512_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) m = _mm512_max_ps(m, _mm512_abs_ps(_mm512_loadu_ps(x + i)));
  float r = _mm512_reduce_max_ps(m);
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

}  // namespace argb::kern::avx512_impl
