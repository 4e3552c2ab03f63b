#include "kernels_common.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

namespace argb::kern {

const Ops& ops_for(Isa isa) {
  switch (isa) {
    case Isa::avx512: return avx512_impl::ops;
    case Isa::avx2:   return avx2_impl::ops;
    default:          return scalar_impl::ops;
  }
}

Isa detect_best() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx512f")) return Isa::avx512;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

namespace {

Isa initial_isa() {
  if (const char* e = std::getenv("ARGB_KERNEL")) {
    std::string s(e);
    if (s == "scalar") return Isa::scalar;
    if (s == "avx2") return Isa::avx2;
    if (s == "avx512") return Isa::avx512;
  }
  return detect_best();
}

Isa g_isa = initial_isa();

}  // namespace

Isa active_isa() { return g_isa; }
void set_isa(Isa isa) { g_isa = isa; }

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::avx512: return "avx512";
    case Isa::avx2:   return "avx2";
    default:          return "scalar";
  }
}

void pad_planes(const float* in, float* out, int planes, int H, int W, int pad) {
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  for (int p = 0; p < planes; ++p) {
    float* dst = out + static_cast<size_t>(p) * Hp * Wp;
    const float* src = in + static_cast<size_t>(p) * H * W;
    std::memset(dst, 0, sizeof(float) * pad * Wp);
    for (int y = 0; y < H; ++y) {
      float* row = dst + static_cast<size_t>(y + pad) * Wp;
      for (int x = 0; x < pad; ++x) row[x] = 0.0f;
      std::memcpy(row + pad, src + static_cast<size_t>(y) * W, sizeof(float) * W);
      for (int x = 0; x < pad; ++x) row[pad + W + x] = 0.0f;
    }
    std::memset(dst + static_cast<size_t>(H + pad) * Wp, 0, sizeof(float) * pad * Wp);
  }
}

#define ARGB_DISPATCH(fn, ...) return ops_for(g_isa).fn(__VA_ARGS__)

void conv2d_fwd(const float* in, const float* w, const float* bias, float* out,
                int N, int Ci, int Co, int H, int W, int k) {
  ARGB_DISPATCH(conv2d_fwd, in, w, bias, out, N, Ci, Co, H, W, k);
}
void conv2d_bwd_input(const float* dout, const float* w, float* din,
                      int N, int Ci, int Co, int H, int W, int k) {
  ARGB_DISPATCH(conv2d_bwd_input, dout, w, din, N, Ci, Co, H, W, k);
}
void conv2d_bwd_params(const float* in, const float* dout, float* dw, float* db,
                       int N, int Ci, int Co, int H, int W, int k) {
  ARGB_DISPATCH(conv2d_bwd_params, in, dout, dw, db, N, Ci, Co, H, W, k);
}
void leaky_relu_fwd(const float* x, float* y, float slope, size_t n) {
  ARGB_DISPATCH(leaky_relu_fwd, x, y, slope, n);
}
void leaky_relu_bwd(const float* x, const float* dy, float* dx, float slope, size_t n) {
  ARGB_DISPATCH(leaky_relu_bwd, x, dy, dx, slope, n);
}
void axpy(float a, const float* x, float* y, size_t n) { ARGB_DISPATCH(axpy, a, x, y, n); }
void scale(float a, float* x, size_t n) { ARGB_DISPATCH(scale, a, x, n); }
void vsub(const float* a, const float* b, float* y, size_t n) { ARGB_DISPATCH(vsub, a, b, y, n); }
void vmul(const float* a, const float* b, float* y, size_t n) { ARGB_DISPATCH(vmul, a, b, y, n); }
void vfma(const float* a, const float* b, float* y, size_t n) { ARGB_DISPATCH(vfma, a, b, y, n); }
double sum(const float* x, size_t n) { ARGB_DISPATCH(sum, x, n); }
double sum_abs(const float* x, size_t n) { ARGB_DISPATCH(sum_abs, x, n); }
double sum_sq(const float* x, size_t n) { ARGB_DISPATCH(sum_sq, x, n); }
double sum_abs_diff(const float* a, const float* b, size_t n) { ARGB_DISPATCH(sum_abs_diff, a, b, n); }
double sum_sq_diff(const float* a, const float* b, size_t n) { ARGB_DISPATCH(sum_sq_diff, a, b, n); }
float max_abs(const float* x, size_t n) { ARGB_DISPATCH(max_abs, x, n); }

#undef ARGB_DISPATCH

}  // namespace argb::kern
