#pragma once

#include <string>

#include "argb/tensor.hpp"

namespace argb {

/// Decodes an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into a 1 x 3 x H x W
/// tensor with channel values in [0,1] (8-bit value / 255).
Tensor load_png(const std::string& path);

/// Writes a 1 x 3 x H x W (or 1 x 1 x H x W) tensor as an 8-bit PNG;
/// values are clipped to [0,1] and rounded to the 255 grid.
void save_png(const std::string& path, const Tensor& img);

}  // namespace argb
