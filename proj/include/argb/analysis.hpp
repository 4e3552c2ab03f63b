#pragma once

#include <string>
#include <vector>

#include "argb/model.hpp"
#include "argb/rng.hpp"
#include "argb/tensor.hpp"

namespace argb::analysis {

/// Orthogonal split of an embedding: xi_par = (A+ A) xi lives in the row
/// space of A (the color-carrying part), xi_perp = (I - A+ A) xi in the
/// nullspace (the structure-carrying part).
struct Decomposition {
  Tensor xi_par;
  Tensor xi_perp;
};

Decomposition decompose(const Tensor& xi, const EffectiveDecoder& eff);

/// max |g(xi + P_perp zeta) - g(xi)|; adding nullspace components must not
/// change the decoded image.
double nullspace_invariance(ArgbModel& model, const Tensor& xi, const Tensor& zeta,
                            const EffectiveDecoder& eff);

/// xi_mix = (A+ A) xi1 + (I - A+ A) xi2.
Tensor mix_embeddings(const Tensor& xi1, const Tensor& xi2, const EffectiveDecoder& eff);

struct InversionConfig {
  int steps = 50;
  double lr = 0.1;
  bool init_from_image = false;  // false: random uniform [0,1]
  uint64_t seed = 0;
};

struct InversionResult {
  Tensor image;
  std::vector<double> loss_trace;  // length steps + 1 (before each step + final)
};

/// Plain SGD on mean((f(z) - target)^2) w.r.t. the input image z.
InversionResult invert(ArgbModel& model, const Tensor& target_xi, const InversionConfig& cfg,
                       const Tensor* init_image = nullptr);

struct SelfRefResult {
  Tensor map;        // 1 x 1 x H x W; zero at pixels skipped by the stride
  double mean = 0.0, min = 0.0, max = 0.0;
  int stride = 1;    // pixel subsampling used
  size_t evaluated = 0;
};

/// Per-pixel RMS over the three color channels of the diagonal of
/// A (d xi[p] / d x[p]): unity for a perfectly self-referential
/// autoencoder. Exact backward-mode differentiation; pixels are grouped on
/// grids spaced by the expert receptive field so that one backward pass per
/// (channel, group) yields exact per-pixel blocks.
SelfRefResult self_reference(ArgbModel& model, const Tensor& x, int pixel_stride = 1);

struct MetricSweepRow {
  double sigma = 0.0;
  double rgb_mean = 0.0, rgb_std = 0.0;
  double argb_mean = 0.0, argb_std = 0.0;
};

/// For each sigma: n_samples AWGN draws (clipped to [0,1]); mean/std of the
/// mean-squared distances measured in RGB and in the encoder space.
std::vector<MetricSweepRow> metric_sweep(ArgbModel& model, const Tensor& x,
                                         const std::vector<double>& sigmas, int n_samples,
                                         Rng& rng);

void write_sweep_csv(const std::string& path, const std::vector<MetricSweepRow>& rows);

struct ExpertMap {
  std::vector<int> idx;  // row-major H x W
  int height = 0, width = 0;
};

ExpertMap expert_map(ArgbModel& model, const Tensor& x);
void write_expert_map_png(const std::string& path, const ExpertMap& map, int num_experts);

/// CSV rows (x, y, expert, e0..e{C-1}) for every `subsample`-th pixel of a
/// strided grid; made for external t-SNE tooling.
void export_embeddings(const std::string& csv_path, ArgbModel& model, const Tensor& x,
                       int subsample);

struct MaximizeResult {
  Tensor image;
  std::vector<double> trace;  // mean activation per step + final
};

/// Gradient ascent on the mean activation of one output channel of one
/// expert; the image is clamped to [0,1] after every step.
MaximizeResult maximize_filter(ArgbModel& model, int expert_k, int channel, int size, int steps,
                               double lr, Rng& rng);

}  // namespace argb::analysis
