#include "argb/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "argb/image_io.hpp"

namespace argb::plot {

namespace {

struct Canvas {
  int w, h;
  Tensor img;
  Canvas(int w_, int h_) : w(w_), h(h_), img({1, 3, h_, w_}, 1.0f) {}

  void px(int x, int y, float r, float g, float b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    img.at(0, 0, y, x) = r;
    img.at(0, 1, y, x) = g;
    img.at(0, 2, y, x) = b;
  }

  void line(int x0, int y0, int x1, int y1, float r, float g, float b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      px(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void rect_fill(int x0, int y0, int x1, int y1, float r, float g, float b) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) px(x, y, r, g, b);
  }

  // 3x5 glyphs for numeric labels
  void text(int x, int y, const std::string& s) {
    static const char* glyphs = "0123456789.-+e";
    static const uint16_t rows[14][5] = {
        {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
        {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
        {0, 0, 0, 0, 2}, {0, 0, 7, 0, 0}, {0, 2, 7, 2, 0}, {0, 7, 7, 4, 7}};
    int cx = x;
    for (char ch : s) {
      const char* p = std::strchr(glyphs, ch);
      if (p) {
        const int gi = static_cast<int>(p - glyphs);
        for (int gy = 0; gy < 5; ++gy)
          for (int gx = 0; gx < 3; ++gx)
            if (rows[gi][gy] & (4 >> gx)) px(cx + gx, y + gy, 0.1f, 0.1f, 0.1f);
      }
      cx += 4;
    }
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

constexpr float kPalette[6][3] = {{0.12f, 0.35f, 0.80f}, {0.85f, 0.25f, 0.10f},
                                  {0.10f, 0.60f, 0.25f}, {0.70f, 0.45f, 0.05f},
                                  {0.50f, 0.15f, 0.60f}, {0.05f, 0.55f, 0.60f}};

}  // namespace

void line_chart(const std::string& path, const std::vector<std::vector<double>>& series,
                int width, int height, bool log_y) {
  Canvas cv(width, height);
  const int ml = 46, mr = 12, mt = 12, mb = 22;
  const int x0 = ml, x1 = width - mr, y0 = mt, y1 = height - mb;
  cv.line(x0, y0, x0, y1, 0, 0, 0);
  cv.line(x0, y1, x1, y1, 0, 0, 0);

  double lo = 1e300, hi = -1e300;
  size_t nmax = 0;
  for (const auto& s : series) {
    nmax = std::max(nmax, s.size());
    for (double v : s) {
      const double t = log_y ? (v > 0 ? std::log10(v) : 0.0) : v;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (!(hi > lo)) { hi = lo + 1.0; }
  if (nmax < 2) nmax = 2;

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const auto& col = kPalette[si % 6];
    int px = -1, py = -1;
    for (size_t i = 0; i < s.size(); ++i) {
      const double v = log_y ? (s[i] > 0 ? std::log10(s[i]) : lo) : s[i];
      const int x = x0 + static_cast<int>((x1 - x0) * static_cast<double>(i) / (nmax - 1));
      const int y = y1 - static_cast<int>((y1 - y0) * (v - lo) / (hi - lo));
      if (px >= 0) cv.line(px, py, x, y, col[0], col[1], col[2]);
      px = x;
      py = y;
    }
  }
  cv.text(2, y0 - 2, fmt_tick(log_y ? std::pow(10.0, hi) : hi));
  cv.text(2, y1 - 3, fmt_tick(log_y ? std::pow(10.0, lo) : lo));
  cv.text(x0, y1 + 6, "0");
  cv.text(x1 - 24, y1 + 6, fmt_tick(static_cast<double>(nmax - 1)));
  save_png(path, cv.img);
}

void histogram_chart(const std::string& path, const std::vector<double>& bin_edges,
                     const std::vector<int64_t>& counts, int width, int height) {
  Canvas cv(width, height);
  const int ml = 46, mr = 12, mt = 12, mb = 22;
  const int x0 = ml, x1 = width - mr, y0 = mt, y1 = height - mb;
  cv.line(x0, y0, x0, y1, 0, 0, 0);
  cv.line(x0, y1, x1, y1, 0, 0, 0);

  int64_t cmax = 1;
  for (int64_t c : counts) cmax = std::max(cmax, c);
  const double lmax = std::log10(static_cast<double>(cmax) + 1.0);
  const size_t nb = counts.size();
  for (size_t i = 0; i < nb; ++i) {
    const int bx0 = x0 + static_cast<int>((x1 - x0) * static_cast<double>(i) / nb);
    const int bx1 = x0 + static_cast<int>((x1 - x0) * static_cast<double>(i + 1) / nb) - 1;
    const double f = std::log10(static_cast<double>(counts[i]) + 1.0) / lmax;
    const int by = y1 - static_cast<int>((y1 - y0) * f);
    if (counts[i] > 0) cv.rect_fill(bx0, by, std::max(bx0, bx1), y1 - 1, 0.25f, 0.45f, 0.8f);
  }
  cv.text(2, y0 - 2, fmt_tick(static_cast<double>(cmax)));
  cv.text(x0, y1 + 6, fmt_tick(bin_edges.front()));
  cv.text(x1 - 30, y1 + 6, fmt_tick(bin_edges.back()));
  save_png(path, cv.img);
}

Tensor normalize_map(const Tensor& map) {
  Tensor out = map;
  float lo = 3.4e38f, hi = -3.4e38f;
  for (float v : map.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  for (auto& v : out.v) v = (v - lo) / span;
  return out;
}

}  // namespace argb::plot
