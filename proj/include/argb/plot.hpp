#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "argb/tensor.hpp"

namespace argb::plot {

/// Polyline chart of one or more series (x = index), axes box and numeric
/// min/max tick labels. Series are colored from a fixed palette.
void line_chart(const std::string& path, const std::vector<std::vector<double>>& series,
                int width = 720, int height = 440, bool log_y = false);

/// Bar chart for a histogram (bin_edges has counts.size()+1 entries).
void histogram_chart(const std::string& path, const std::vector<double>& bin_edges,
                     const std::vector<int64_t>& counts, int width = 720, int height = 440);

/// Normalizes a single-channel map to [0,1] (min..max) for PNG export.
Tensor normalize_map(const Tensor& map);

}  // namespace argb::plot
