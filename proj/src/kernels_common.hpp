#pragma once

// Internal helpers shared by the kernel variant translation units.

#include <vector>

#include "argb/kernels.hpp"

namespace argb::kern {

namespace scalar_impl { extern const Ops ops; }
namespace avx2_impl   { extern const Ops ops; }
namespace avx512_impl { extern const Ops ops; }

/// Thread-local scratch so hot paths do not reallocate per call.
inline float* scratch(int slot, size_t n) {
  thread_local std::vector<float> bufs[3];
  if (bufs[slot].size() < n) bufs[slot].resize(n);
  return bufs[slot].data();
}

/// w (Co x Ci x k x k) -> wt (Ci x Co x k x k), kernel rotated 180 degrees.
/// Turns the input-gradient convolution into a forward convolution.
inline void transpose_rotate(const float* w, float* wt, int Ci, int Co, int k) {
  for (int co = 0; co < Co; ++co)
    for (int ci = 0; ci < Ci; ++ci)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx)
          wt[(((static_cast<size_t>(ci) * Co) + co) * k + (k - 1 - dy)) * k + (k - 1 - dx)] =
              w[(((static_cast<size_t>(co) * Ci) + ci) * k + dy) * k + dx];
}

}  // namespace argb::kern
