#include "argb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "argb/errors.hpp"
#include "argb/image_io.hpp"
#include "argb/kernels.hpp"

namespace argb::analysis {

namespace {

/// y[p] = M * xi[p] for every pixel, accumulated in double.
Tensor project(const Tensor& xi, const Tensor& M) {
  const int C = xi.c(), N = xi.n(), H = xi.h(), W = xi.w();
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor out(xi.shape);
  std::vector<double> acc(static_cast<size_t>(C));
  for (int n = 0; n < N; ++n) {
    const float* base = xi.data() + xi.idx(n, 0, 0, 0);
    float* ob = out.data() + xi.idx(n, 0, 0, 0);
    for (size_t p = 0; p < plane; ++p) {
      for (int i = 0; i < C; ++i) {
        double s = 0.0;
        const float* row = M.data() + static_cast<size_t>(i) * C;
        for (int j = 0; j < C; ++j) s += static_cast<double>(row[j]) * base[j * plane + p];
        acc[static_cast<size_t>(i)] = s;
      }
      for (int i = 0; i < C; ++i) ob[static_cast<size_t>(i) * plane + p] = static_cast<float>(acc[static_cast<size_t>(i)]);
    }
  }
  return out;
}

void check_embedding(const Tensor& xi) {
  if (xi.rank() != 4 || xi.c() != ArgbModel::kEmbedDim)
    throw std::invalid_argument("expected an embedding with " +
                                std::to_string(ArgbModel::kEmbedDim) + " channels, got " +
                                xi.shape_str());
}

}  // namespace

Decomposition decompose(const Tensor& xi, const EffectiveDecoder& eff) {
  check_embedding(xi);
  Decomposition d;
  d.xi_par = project(xi, eff.P_par);
  // complement in float keeps xi_par + xi_perp = xi to the last bit
  d.xi_perp = Tensor(xi.shape);
  kern::vsub(xi.data(), d.xi_par.data(), d.xi_perp.data(), xi.numel());
  return d;
}

double nullspace_invariance(ArgbModel& model, const Tensor& xi, const Tensor& zeta,
                            const EffectiveDecoder& eff) {
  check_embedding(xi);
  if (!zeta.same_shape(xi)) throw std::invalid_argument("nullspace_invariance: shape mismatch");
  Tensor perturbed = project(zeta, eff.P_perp);
  kern::axpy(1.0f, xi.data(), perturbed.data(), perturbed.numel());
  Tensor base = model.decode(xi);
  Tensor moved = model.decode(perturbed);
  Tensor diff(base.shape);
  kern::vsub(moved.data(), base.data(), diff.data(), diff.numel());
  return kern::max_abs(diff.data(), diff.numel());
}

Tensor mix_embeddings(const Tensor& xi1, const Tensor& xi2, const EffectiveDecoder& eff) {
  check_embedding(xi1);
  if (!xi1.same_shape(xi2)) throw std::invalid_argument("mix_embeddings: shape mismatch");
  Tensor par = project(xi1, eff.P_par);
  Tensor perp = project(xi2, eff.P_perp);
  kern::axpy(1.0f, perp.data(), par.data(), par.numel());
  return par;
}

InversionResult invert(ArgbModel& model, const Tensor& target_xi, const InversionConfig& cfg,
                       const Tensor* init_image) {
  check_embedding(target_xi);
  if (!target_xi.finite()) throw std::invalid_argument("invert: non-finite target");
  if (cfg.steps < 1) throw std::invalid_argument("invert: steps must be >= 1");
  const int H = target_xi.h(), W = target_xi.w();

  Tensor z({1, 3, H, W});
  if (cfg.init_from_image) {
    if (!init_image) throw std::invalid_argument("invert: init image required");
    z = *init_image;
  } else {
    Rng rng(cfg.seed);
    for (auto& v : z.v) v = static_cast<float>(rng.uniform());
  }

  InversionResult res;
  const size_t n = target_xi.numel();
  for (int it = 0; it <= cfg.steps; ++it) {
    EncodeCache cache;
    Tensor xi = model.encode(z, false, it < cfg.steps ? &cache : nullptr);
    const double loss = kern::sum_sq_diff(xi.data(), target_xi.data(), n) / static_cast<double>(n);
    if (!std::isfinite(loss))
      throw NumericalError("embedding inversion diverged at iteration " + std::to_string(it));
    res.loss_trace.push_back(loss);
    if (it == cfg.steps) break;
    Tensor dxi(xi.shape);
    const float k = 2.0f / static_cast<float>(n);
    for (size_t i = 0; i < n; ++i) dxi.v[i] = k * (xi.v[i] - target_xi.v[i]);
    Tensor dz = model.encode_backward(dxi, cache, true, false);
    kern::axpy(static_cast<float>(-cfg.lr), dz.data(), z.data(), z.numel());
  }
  res.image = std::move(z);
  return res;
}

SelfRefResult self_reference(ArgbModel& model, const Tensor& x, int pixel_stride) {
  validate_image(x);
  if (pixel_stride < 1) throw std::invalid_argument("self_reference: stride must be >= 1");
  const int H = x.h(), W = x.w();
  const int G = ArgbModel::kExpertRf;  // grid spacing; receptive fields stay disjoint
  const size_t plane = static_cast<size_t>(H) * W;

  EncodeCache cache;
  (void)model.encode(x, false, &cache);
  EffectiveDecoder eff = model.effective_decoder();
  const int C = ArgbModel::kEmbedDim;

  // diag[c][p] = (A d xi[p] / d x[p])_{cc}
  Tensor diag({1, 3, H, W});
  Tensor dxi({1, C, H, W});
  std::vector<char> done(plane, 0);

  for (int c = 0; c < 3; ++c) {
    // residue classes of the strided pixel set modulo the grid spacing
    for (int ry = 0; ry < G; ++ry)
      for (int rx = 0; rx < G; ++rx) {
        bool any = false;
        std::fill(dxi.v.begin(), dxi.v.end(), 0.0f);
        for (int y = ry; y < H; y += G)
          for (int xx = rx; xx < W; xx += G) {
            if (y % pixel_stride != 0 || xx % pixel_stride != 0) continue;
            any = true;
            for (int ch = 0; ch < C; ++ch)
              dxi.v[dxi.idx(0, ch, y, xx)] = eff.A.v[static_cast<size_t>(c) * C + ch];
          }
        if (!any) continue;
        Tensor dx = model.encode_backward(dxi, cache, true, false);
        if (!dx.finite()) throw NumericalError("self_reference: non-finite Jacobian");
        for (int y = ry; y < H; y += G)
          for (int xx = rx; xx < W; xx += G) {
            if (y % pixel_stride != 0 || xx % pixel_stride != 0) continue;
            diag.v[diag.idx(0, c, y, xx)] = dx.v[dx.idx(0, c, y, xx)];
            if (c == 0) done[static_cast<size_t>(y) * W + xx] = 1;
          }
      }
  }

  SelfRefResult res;
  res.stride = pixel_stride;
  res.map = Tensor({1, 1, H, W});
  double sum = 0.0, mn = 1e300, mx = -1e300;
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      if (!done[static_cast<size_t>(y) * W + xx]) continue;
      double s2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = diag.v[diag.idx(0, c, y, xx)];
        s2 += d * d;
      }
      const double rms = std::sqrt(s2 / 3.0);
      res.map.v[res.map.idx(0, 0, y, xx)] = static_cast<float>(rms);
      sum += rms;
      mn = std::min(mn, rms);
      mx = std::max(mx, rms);
      ++res.evaluated;
    }
  if (res.evaluated == 0) throw std::invalid_argument("self_reference: stride leaves no pixels");
  res.mean = sum / static_cast<double>(res.evaluated);
  res.min = mn;
  res.max = mx;
  return res;
}

std::vector<MetricSweepRow> metric_sweep(ArgbModel& model, const Tensor& x,
                                         const std::vector<double>& sigmas, int n_samples,
                                         Rng& rng) {
  validate_image(x);
  if (n_samples < 1) throw std::invalid_argument("metric_sweep: n_samples must be >= 1");
  for (double s : sigmas)
    if (s < 0.0) throw std::invalid_argument("metric_sweep: sigma must be >= 0");

  Tensor xi0 = model.encode(x);
  const size_t n_rgb = x.numel(), n_xi = xi0.numel();
  std::vector<MetricSweepRow> rows;
  for (double sigma : sigmas) {
    std::vector<double> dr(static_cast<size_t>(n_samples)), da(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
      Tensor xn = x;
      if (sigma > 0.0)
        for (auto& v : xn.v)
          v = std::clamp(v + static_cast<float>(sigma * rng.normal()), 0.0f, 1.0f);
      dr[static_cast<size_t>(s)] =
          kern::sum_sq_diff(x.data(), xn.data(), n_rgb) / static_cast<double>(n_rgb);
      Tensor xin = model.encode(xn);
      da[static_cast<size_t>(s)] =
          kern::sum_sq_diff(xi0.data(), xin.data(), n_xi) / static_cast<double>(n_xi);
    }
    auto mean_std = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double t : v) m += t;
      m /= static_cast<double>(v.size());
      double s2 = 0.0;
      for (double t : v) s2 += (t - m) * (t - m);
      const double sd = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
      return std::pair<double, double>(m, sd);
    };
    MetricSweepRow row;
    row.sigma = sigma;
    std::tie(row.rgb_mean, row.rgb_std) = mean_std(dr);
    std::tie(row.argb_mean, row.argb_std) = mean_std(da);
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<MetricSweepRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "sigma,rgb_mean,rgb_std,argb_mean,argb_std\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g\n", r.sigma, r.rgb_mean, r.rgb_std,
                  r.argb_mean, r.argb_std);
    f << buf;
  }
}

ExpertMap expert_map(ArgbModel& model, const Tensor& x) {
  validate_image(x);
  Tensor probs = model.route(x);
  ExpertMap m;
  m.height = x.h();
  m.width = x.w();
  m.idx = expert_argmax(probs);
  return m;
}

void write_expert_map_png(const std::string& path, const ExpertMap& map, int num_experts) {
  // evenly spaced hues, full saturation
  auto palette = [num_experts](int k, float* rgb) {
    const float h = 6.0f * static_cast<float>(k) / static_cast<float>(std::max(num_experts, 1));
    const int i = static_cast<int>(h) % 6;
    const float f = h - std::floor(h);
    const float q = 1.0f - f;
    switch (i) {
      case 0: rgb[0] = 1; rgb[1] = f; rgb[2] = 0; break;
      case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = 0; break;
      case 2: rgb[0] = 0; rgb[1] = 1; rgb[2] = f; break;
      case 3: rgb[0] = 0; rgb[1] = q; rgb[2] = 1; break;
      case 4: rgb[0] = f; rgb[1] = 0; rgb[2] = 1; break;
      default: rgb[0] = 1; rgb[1] = 0; rgb[2] = q; break;
    }
  };
  Tensor img({1, 3, map.height, map.width});
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      float rgb[3];
      palette(map.idx[static_cast<size_t>(y) * map.width + x], rgb);
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = rgb[c];
    }
  save_png(path, img);
}

void export_embeddings(const std::string& csv_path, ArgbModel& model, const Tensor& x,
                       int subsample) {
  validate_image(x);
  if (subsample < 1) throw std::invalid_argument("export_embeddings: subsample must be >= 1");
  Tensor xi = model.encode(x);
  ExpertMap map = expert_map(model, x);
  const int C = xi.c(), H = xi.h(), W = xi.w();

  std::ofstream f(csv_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + csv_path);
  f << "x,y,expert";
  for (int c = 0; c < C; ++c) f << ",e" << c;
  f << "\n";
  char buf[32];
  for (int y = 0; y < H; y += subsample)
    for (int xx = 0; xx < W; xx += subsample) {
      f << xx << "," << y << "," << map.idx[static_cast<size_t>(y) * W + xx];
      for (int c = 0; c < C; ++c) {
        std::snprintf(buf, sizeof(buf), ",%.9g", xi.at(0, c, y, xx));
        f << buf;
      }
      f << "\n";
    }
}

MaximizeResult maximize_filter(ArgbModel& model, int expert_k, int channel, int size, int steps,
                               double lr, Rng& rng) {
  if (expert_k < 0 || expert_k >= model.num_experts())
    throw std::invalid_argument("maximize_filter: expert index out of range");
  if (channel < 0 || channel >= model.embedding_dim())
    throw std::invalid_argument("maximize_filter: channel out of range");

  Tensor z({1, 3, size, size});
  for (auto& v : z.v) v = static_cast<float>(rng.uniform());
  const size_t plane = static_cast<size_t>(size) * size;

  MaximizeResult res;
  auto& expert = model.expert(expert_k);
  for (int it = 0; it <= steps; ++it) {
    nn::NetCache cache;
    Tensor out = expert.forward(z, false, it < steps ? &cache : nullptr);
    const double act =
        kern::sum(out.data() + out.idx(0, channel, 0, 0), plane) / static_cast<double>(plane);
    if (!std::isfinite(act))
      throw NumericalError("maximize_filter diverged at step " + std::to_string(it));
    res.trace.push_back(act);
    if (it == steps) break;
    Tensor dout(out.shape);
    const float g = 1.0f / static_cast<float>(plane);
    float* dp = dout.data() + dout.idx(0, channel, 0, 0);
    for (size_t i = 0; i < plane; ++i) dp[i] = g;
    Tensor dz = expert.backward(dout, cache, true, false);
    kern::axpy(static_cast<float>(lr), dz.data(), z.data(), z.numel());
    for (auto& v : z.v) v = std::clamp(v, 0.0f, 1.0f);
  }
  res.image = std::move(z);
  return res;
}

}  // namespace argb::analysis
