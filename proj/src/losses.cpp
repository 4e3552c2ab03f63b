#include "argb/losses.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "argb/errors.hpp"

namespace argb::losses {

LossKind kind_from_string(const std::string& s) {
  if (s == "l1") return LossKind::l1;
  if (s == "l2") return LossKind::l2;
  if (s == "psnr") return LossKind::psnr;
  if (s == "charbonnier") return LossKind::charbonnier;
  if (s == "edge") return LossKind::edge;
  throw ConfigError("unknown loss kind: " + s + " (expected l1 | l2 | psnr | charbonnier | edge)");
}

LossSpace space_from_string(const std::string& s) {
  if (s == "rgb") return LossSpace::rgb;
  if (s == "argb") return LossSpace::argb;
  throw ConfigError("unknown loss space: " + s + " (expected rgb | argb)");
}

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::l1: return "l1";
    case LossKind::l2: return "l2";
    case LossKind::psnr: return "psnr";
    case LossKind::charbonnier: return "charbonnier";
    default: return "edge";
  }
}

const char* to_string(LossSpace s) { return s == LossSpace::rgb ? "rgb" : "argb"; }

Tensor laplacian(const Tensor& x) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  Tensor y(x.shape);
  auto v = [&](int n, int c, int yy, int xx) -> float {
    if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0f;
    return x.at(n, c, yy, xx);
  };
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx)
          y.at(n, c, yy, xx) = v(n, c, yy - 1, xx) + v(n, c, yy + 1, xx) + v(n, c, yy, xx - 1) +
                               v(n, c, yy, xx + 1) - 4.0f * v(n, c, yy, xx);
  return y;
}

namespace {

double charbonnier_of(const Tensor& a, const Tensor& b, double eps, Tensor* da) {
  const size_t n = a.numel();
  const double e2 = eps * eps;
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    const double r = std::sqrt(d * d + e2);
    s += r;
    if (da) da->v[i] += static_cast<float>(d / (static_cast<double>(n) * r));
  }
  return s / static_cast<double>(n);
}

}  // namespace

double pixel_loss(LossKind kind, const Tensor& pred, const Tensor& target, double eps,
                  Tensor* dpred) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("pixel_loss: shape mismatch " + pred.shape_str() + " vs " +
                                target.shape_str());
  const size_t n = pred.numel();
  switch (kind) {
    case LossKind::l1: {
      const double loss = kern::sum_abs_diff(pred.data(), target.data(), n) / static_cast<double>(n);
      if (dpred) {
        const float inv = 1.0f / static_cast<float>(n);
        for (size_t i = 0; i < n; ++i) {
          const float d = pred.v[i] - target.v[i];
          dpred->v[i] += d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
        }
      }
      return loss;
    }
    case LossKind::l2: {
      const double loss = kern::sum_sq_diff(pred.data(), target.data(), n) / static_cast<double>(n);
      if (dpred)
        for (size_t i = 0; i < n; ++i)
          dpred->v[i] += 2.0f * (pred.v[i] - target.v[i]) / static_cast<float>(n);
      return loss;
    }
    case LossKind::psnr: {
      // negative PSNR: minimizing it maximizes the PSNR score
      const double mse = kern::sum_sq_diff(pred.data(), target.data(), n) / static_cast<double>(n);
      const double stab = mse + 1e-12;
      if (dpred) {
        const double k = 10.0 / std::log(10.0) / stab * 2.0 / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
          dpred->v[i] += static_cast<float>(k * (static_cast<double>(pred.v[i]) - target.v[i]));
      }
      return 10.0 * std::log10(stab);
    }
    case LossKind::charbonnier:
      return charbonnier_of(pred, target, eps, dpred);
    case LossKind::edge: {
      Tensor lp = laplacian(pred), lt = laplacian(target);
      Tensor dlp;
      if (dpred) dlp = Tensor(lp.shape);
      const double loss = charbonnier_of(lp, lt, eps, dpred ? &dlp : nullptr);
      if (dpred) {
        // the Laplacian is self-adjoint under zero padding
        Tensor back = laplacian(dlp);
        kern::axpy(1.0f, back.data(), dpred->data(), dpred->numel());
      }
      return loss;
    }
  }
  throw std::invalid_argument("pixel_loss: unknown kind");
}

double restoration_loss(const LossSpec& spec, ArgbModel* encoder, const Tensor& pred,
                        const Tensor& target, Tensor* dpred) {
  if (spec.space == LossSpace::argb) {
    if (!encoder) throw ConfigError("loss space argb requires an encoder checkpoint");
    return argb_loss(spec, *encoder, pred, target, dpred);
  }
  Tensor dmain;
  if (dpred) dmain = Tensor(pred.shape);
  double loss =
      spec.weight * pixel_loss(spec.kind, pred, target, spec.charbonnier_eps, dpred ? &dmain : nullptr);
  if (dpred) kern::axpy(static_cast<float>(spec.weight), dmain.data(), dpred->data(), dpred->numel());
  for (const auto& [w, fn] : spec.aux) {
    Tensor daux;
    if (dpred) daux = Tensor(pred.shape);
    loss += w * fn(pred, target, dpred ? &daux : nullptr);
    if (dpred) kern::axpy(static_cast<float>(w), daux.data(), dpred->data(), dpred->numel());
  }
  return loss;
}

GradStats grad_stats(const Tensor& grad, int nbins) {
  if (nbins < 1) throw std::invalid_argument("grad_stats: nbins must be >= 1");
  GradStats gs;
  const size_t n = grad.numel();
  gs.max_abs = kern::max_abs(grad.data(), n);
  gs.mean_abs = kern::sum_abs(grad.data(), n) / static_cast<double>(n);
  size_t zeros = 0;
  for (float g : grad.v)
    if (g == 0.0f) ++zeros;
  gs.frac_zero = static_cast<double>(zeros) / static_cast<double>(n);

  const double lim = gs.max_abs > 0.0 ? gs.max_abs : 1.0;
  gs.bin_edges.resize(static_cast<size_t>(nbins) + 1);
  for (int i = 0; i <= nbins; ++i)
    gs.bin_edges[static_cast<size_t>(i)] = -lim + 2.0 * lim * i / nbins;
  gs.counts.assign(static_cast<size_t>(nbins), 0);
  for (float g : grad.v) {
    int b = static_cast<int>((static_cast<double>(g) + lim) / (2.0 * lim) * nbins);
    if (b < 0) b = 0;
    if (b >= nbins) b = nbins - 1;
    ++gs.counts[static_cast<size_t>(b)];
  }
  return gs;
}

void write_grad_hist_csv(const std::string& path, const GradStats& gs) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "bin_left,bin_right,count\n";
  char buf[128];
  for (size_t i = 0; i < gs.counts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%lld\n", gs.bin_edges[i], gs.bin_edges[i + 1],
                  static_cast<long long>(gs.counts[i]));
    f << buf;
  }
}

}  // namespace argb::losses
