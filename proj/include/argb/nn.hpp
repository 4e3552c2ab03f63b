#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "argb/rng.hpp"
#include "argb/tensor.hpp"

namespace argb::nn {

struct Param {
  Tensor value;
  Tensor grad;  // same shape, accumulated by backward()
};

/// Forward state a backward pass needs. Owned by the caller so that
/// eval-mode forwards stay pure and concurrent evaluation is safe; a cache
/// is only written when the caller asks for one.
struct LayerCache {
  Tensor a;  // layer-specific (input, normalized input, ...)
  Tensor b;
  int flag = 0;
};

using NetCache = std::vector<LayerCache>;

class Layer {
 public:
  virtual ~Layer() = default;
  /// `training` selects batch statistics for normalization layers (and
  /// updates their running estimates). Eval-mode forwards with no cache
  /// mutate nothing.
  virtual Tensor forward(const Tensor& x, bool training, LayerCache* c) = 0;
  /// dL/dout -> dL/din. Parameter gradients are accumulated only when
  /// `pgrads`; with pgrads=false no layer state is touched.
  virtual Tensor backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) = 0;
  virtual void collect(const std::string& prefix,
                       std::vector<std::pair<std::string, Param*>>& out) = 0;
  virtual void init(Rng& rng) = 0;
};

/// Convolution, stride 1, kernel size 1 or 3, zero padding k/2.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int k, bool bias);
  Tensor forward(const Tensor& x, bool training, LayerCache* c) override;
  Tensor backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) override;
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Param*>>& out) override;
  void init(Rng& rng) override;

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }
  bool has_bias() const { return has_bias_; }
  Param& weight() { return w_; }
  Param& bias() { return b_; }
  const Param& weight() const { return w_; }
  const Param& bias() const { return b_; }

 private:
  int in_ch_, out_ch_, k_;
  bool has_bias_;
  Param w_, b_;
};

/// Batch normalization over (N,H,W) per channel, PyTorch semantics:
/// biased variance for normalization, unbiased for the running estimate,
/// momentum 0.1, eps 1e-5.
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int ch);
  Tensor forward(const Tensor& x, bool training, LayerCache* c) override;
  Tensor backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) override;
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Param*>>& out) override;
  void init(Rng& rng) override;

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Tensor& running_mean() { return run_mean_; }
  Tensor& running_var() { return run_var_; }

 private:
  int ch_;
  Param gamma_, beta_;
  Tensor run_mean_, run_var_;
  float momentum_ = 0.1f, eps_ = 1e-5f;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(float slope) : slope_(slope) {}
  Tensor forward(const Tensor& x, bool training, LayerCache* c) override;
  Tensor backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) override;
  void collect(const std::string&, std::vector<std::pair<std::string, Param*>>&) override {}
  void init(Rng&) override {}

 private:
  float slope_;
};

/// Softmax over the channel dimension, per pixel.
class ChannelSoftmax final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training, LayerCache* c) override;
  Tensor backward(const Tensor& dy, const LayerCache& c, bool need_dx, bool pgrads) override;
  void collect(const std::string&, std::vector<std::pair<std::string, Param*>>&) override {}
  void init(Rng&) override {}
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Layer* add(std::unique_ptr<Layer> l, std::string name) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(l));
    return layers_.back().get();
  }

  Tensor forward(const Tensor& x, bool training, NetCache* cache) {
    if (cache) cache->resize(layers_.size());
    Tensor cur = x;
    for (size_t i = 0; i < layers_.size(); ++i)
      cur = layers_[i]->forward(cur, training, cache ? &(*cache)[i] : nullptr);
    return cur;
  }

  Tensor backward(const Tensor& dy, const NetCache& cache, bool need_dx, bool pgrads) {
    Tensor cur = dy;
    for (size_t i = layers_.size(); i-- > 0;) {
      const bool need = need_dx || i > 0;
      cur = layers_[i]->backward(cur, cache[i], need, pgrads);
    }
    return cur;
  }

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Param*>>& out) {
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect(prefix + "." + names_[i], out);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  size_t size() const { return layers_.size(); }
  Layer* layer(size_t i) { return layers_[i].get(); }
  const std::string& name(size_t i) const { return names_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> names_;
};

/// Adam with bias correction; state is addressed by parameter index so it
/// serializes alongside the parameters.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<std::pair<std::string, Param*>>& params, double lr);

  int64_t t = 0;
  std::vector<Tensor> m, v;  // parallel to params

  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

 private:
  double beta1_, beta2_, eps_;
};

void zero_grads(const std::vector<std::pair<std::string, Param*>>& params);

/// FNV-1a over the raw parameter bytes; used by the frozen-encoder tests.
uint64_t param_hash(const std::vector<std::pair<std::string, Param*>>& params);

/// Scales all gradients so that max|g| <= clip (inf-norm clipping).
void clip_grad_inf_norm(const std::vector<std::pair<std::string, Param*>>& params, double clip);

}  // namespace argb::nn
