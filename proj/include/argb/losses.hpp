#pragma once

#include <functional>
#include <string>
#include <vector>

#include "argb/kernels.hpp"
#include "argb/model.hpp"
#include "argb/tensor.hpp"

namespace argb::losses {

enum class LossKind { l1, l2, psnr, charbonnier, edge };
enum class LossSpace { rgb, argb };

LossKind kind_from_string(const std::string& s);
LossSpace space_from_string(const std::string& s);
const char* to_string(LossKind k);
const char* to_string(LossSpace s);

/// Auxiliary loss hook: returns the loss value and, when dpred is given,
/// accumulates d(loss)/d(pred) into it (unweighted).
using AuxLoss = std::function<double(const Tensor& pred, const Tensor& target, Tensor* dpred)>;

struct LossSpec {
  LossSpace space = LossSpace::rgb;
  LossKind kind = LossKind::l1;
  double weight = 1.0;
  double charbonnier_eps = 1e-3;
  std::vector<std::pair<double, AuxLoss>> aux;  // (weight, callable)
};

/// Mean-reduced per-pixel distance between same-shaped tensors:
///   l1          mean |d|
///   l2          mean d^2
///   psnr        -10 log10(mean d^2 + 1e-12)
///   charbonnier mean sqrt(d^2 + eps^2)
///   edge        charbonnier between discrete Laplacians
/// When dpred is given, d(loss)/d(pred) is accumulated into it.
double pixel_loss(LossKind kind, const Tensor& pred, const Tensor& target,
                  double charbonnier_eps = 1e-3, Tensor* dpred = nullptr);

/// Discrete Laplacian, 3x3 stencil [[0,1,0],[1,-4,1],[0,1,0]], zero padding,
/// applied per channel. Self-adjoint under zero padding.
Tensor laplacian(const Tensor& x);

/// Per-pixel loss over the encoder's representation space (the encoder
/// stays frozen: eval-mode forward, no parameter gradients). Works with any
/// type exposing ArgbModel's encode/encode_backward signatures.
template <class Encoder>
double argb_loss(const LossSpec& spec, Encoder& enc, const Tensor& pred, const Tensor& target,
                 Tensor* dpred = nullptr) {
  EncodeCache cache;
  Tensor xi_pred = enc.encode(pred, false, dpred ? &cache : nullptr);
  Tensor xi_target = enc.encode(target, false, nullptr);
  Tensor dxi;
  if (dpred) dxi = Tensor(xi_pred.shape);
  double loss = spec.weight * pixel_loss(spec.kind, xi_pred, xi_target, spec.charbonnier_eps,
                                         dpred ? &dxi : nullptr);
  if (dpred) {
    kern::scale(static_cast<float>(spec.weight), dxi.data(), dxi.numel());
    Tensor dx = enc.encode_backward(dxi, cache, true, /*pgrads=*/false);
    kern::axpy(1.0f, dx.data(), dpred->data(), dpred->numel());
  }
  for (const auto& [w, fn] : spec.aux) {
    Tensor daux;
    if (dpred) daux = Tensor(pred.shape);
    loss += w * fn(pred, target, dpred ? &daux : nullptr);
    if (dpred) kern::axpy(static_cast<float>(w), daux.data(), dpred->data(), dpred->numel());
  }
  return loss;
}

/// Full restoration loss for either space; encoder may be null for rgb.
double restoration_loss(const LossSpec& spec, ArgbModel* encoder, const Tensor& pred,
                        const Tensor& target, Tensor* dpred = nullptr);

struct GradStats {
  std::vector<double> bin_edges;  // nbins + 1
  std::vector<int64_t> counts;    // nbins, sums to numel
  double mean_abs = 0.0;
  double max_abs = 0.0;
  double frac_zero = 0.0;
};

GradStats grad_stats(const Tensor& grad, int nbins = 64);
void write_grad_hist_csv(const std::string& path, const GradStats& gs);

}  // namespace argb::losses
