#pragma once

#include <cstddef>

namespace argb::kern {

/// Kernel variants. `scalar` is the reference implementation; the SIMD
/// variants are selected at runtime from cpuid (override with the
/// ARGB_KERNEL environment variable: scalar | avx2 | avx512).
enum class Isa { scalar, avx2, avx512 };

Isa detect_best();
Isa active_isa();
void set_isa(Isa isa);
const char* isa_name(Isa isa);

// ---- convolution, stride 1, kernel size k in {1,3}, zero padding k/2 ----
// Tensors are NCHW, W contiguous.
//   in   N x Ci x H x W
//   w    Co x Ci x k x k
//   bias Co (nullptr = no bias)
//   out  N x Co x H x W
void conv2d_fwd(const float* in, const float* w, const float* bias, float* out,
                int N, int Ci, int Co, int H, int W, int k);

/// dL/dout -> dL/din (din overwritten).
void conv2d_bwd_input(const float* dout, const float* w, float* din,
                      int N, int Ci, int Co, int H, int W, int k);

/// Accumulates dL/dw into dw (Co x Ci x k x k) and dL/dbias into db
/// (nullptr = layer has no bias).
void conv2d_bwd_params(const float* in, const float* dout, float* dw, float* db,
                       int N, int Ci, int Co, int H, int W, int k);

// ---- elementwise ----
void leaky_relu_fwd(const float* x, float* y, float slope, size_t n);
void leaky_relu_bwd(const float* x, const float* dy, float* dx, float slope, size_t n);
void axpy(float a, const float* x, float* y, size_t n);  // y += a*x
void scale(float a, float* x, size_t n);
void vsub(const float* a, const float* b, float* y, size_t n);  // y = a-b
void vmul(const float* a, const float* b, float* y, size_t n);  // y = a*b
void vfma(const float* a, const float* b, float* y, size_t n);  // y += a*b

// ---- reductions (fixed accumulation order per variant) ----
double sum(const float* x, size_t n);
double sum_abs(const float* x, size_t n);
double sum_sq(const float* x, size_t n);
double sum_abs_diff(const float* a, const float* b, size_t n);
double sum_sq_diff(const float* a, const float* b, size_t n);
float max_abs(const float* x, size_t n);

/// Per-variant entry points, exposed for equivalence tests.
struct Ops {
  void (*conv2d_fwd)(const float*, const float*, const float*, float*,
                     int, int, int, int, int, int);
  void (*conv2d_bwd_input)(const float*, const float*, float*,
                           int, int, int, int, int, int);
  void (*conv2d_bwd_params)(const float*, const float*, float*, float*,
                            int, int, int, int, int, int);
  void (*leaky_relu_fwd)(const float*, float*, float, size_t);
  void (*leaky_relu_bwd)(const float*, const float*, float*, float, size_t);
  void (*axpy)(float, const float*, float*, size_t);
  void (*scale)(float, float*, size_t);
  void (*vsub)(const float*, const float*, float*, size_t);
  void (*vmul)(const float*, const float*, float*, size_t);
  void (*vfma)(const float*, const float*, float*, size_t);
  double (*sum)(const float*, size_t);
  double (*sum_abs)(const float*, size_t);
  double (*sum_sq)(const float*, size_t);
  double (*sum_abs_diff)(const float*, const float*, size_t);
  double (*sum_sq_diff)(const float*, const float*, size_t);
  float (*max_abs)(const float*, size_t);
};

const Ops& ops_for(Isa isa);

/// Zero-pads each HxW plane of `in` by `pad` on all sides into `out`
/// (N*C planes of (H+2p)x(W+2p)). Shared by all conv variants.
void pad_planes(const float* in, float* out, int planes, int H, int W, int pad);

}  // namespace argb::kern
