#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "argb/nn.hpp"
#include "argb/tensor.hpp"

namespace argb {

/// Collapsed affine form of the pixel-wise linear decoder plus the
/// projectors derived from its Moore-Penrose pseudoinverse.
struct EffectiveDecoder {
  Tensor A;       // 3 x C
  Tensor b;       // 3
  Tensor A_pinv;  // C x 3
  Tensor P_par;   // C x C, projects onto the row space of A
  Tensor P_perp;  // C x C, projects onto the nullspace of A
  int rank = 0;
  bool rank_deficient = false;  // rank < 3; a warning, not an error

  /// y = A * v + b for one embedding vector (v has C entries).
  void apply(const float* v, float* y3) const;
};

/// Per-call forward state for encode(); required for any backward pass.
struct EncodeCache {
  nn::NetCache router;
  std::vector<nn::NetCache> experts;
  Tensor probs;  // N x K x H x W
  Tensor masks;  // N x K x H x W, binary
};

/// The aRGB autoencoder: a per-pixel routed mixture of small convolutional
/// experts with a pixel-wise linear decoder. Router receptive field is 7x7,
/// expert receptive field 9x9.
class ArgbModel {
 public:
  static constexpr int kEmbedDim = 128;
  static constexpr int kRouterRf = 7;
  static constexpr int kExpertRf = 9;

  /// Builds the architecture and initializes every module independently
  /// from `seed`.
  explicit ArgbModel(int num_experts, uint64_t seed = 0);

  int num_experts() const { return K_; }
  int embedding_dim() const { return kEmbedDim; }

  /// Router probabilities, N x K x H x W; per pixel a simplex over K.
  /// Rejects inputs without 3 channels or with non-finite values.
  Tensor route(const Tensor& x, bool training = false, nn::NetCache* cache = nullptr);

  /// xi = sum_k m_k (.) f_k(x). Eval-mode batch-norm unless `training`.
  Tensor encode(const Tensor& x, bool training = false, EncodeCache* cache = nullptr);

  /// dL/dxi -> dL/dx through the selected experts only (masks are
  /// constants; the router receives no gradient from this path).
  Tensor encode_backward(const Tensor& dxi, const EncodeCache& cache, bool need_dx, bool pgrads);

  /// Router gradient entry point (used by the balancing loss).
  void router_backward(const Tensor& dprobs, const EncodeCache& cache, bool pgrads);

  /// Pixel-wise affine map, N x C x H x W -> N x 3 x H x W.
  Tensor decode(const Tensor& xi, nn::NetCache* cache = nullptr);
  Tensor decode_backward(const Tensor& dy, const nn::NetCache& cache, bool pgrads);

  /// Collapses the decoder stack into (A, b) and computes the projectors.
  EffectiveDecoder effective_decoder();

  std::vector<std::pair<std::string, nn::Param*>> params();
  /// Parameters plus batch-norm running statistics, for checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();

  nn::Sequential& router() { return router_; }
  nn::Sequential& expert(int k) { return experts_[static_cast<size_t>(k)]; }
  nn::Sequential& decoder() { return decoder_; }

 private:
  int K_;
  nn::Sequential router_;
  std::vector<nn::Sequential> experts_;
  nn::Sequential decoder_;
};

/// Top-1 masks from router probabilities; mutually exclusive, jointly
/// exhaustive, ties broken toward the lowest expert index.
Tensor top1_masks(const Tensor& probs);

/// Per-pixel argmax expert index (same tie-break), N x H x W as ints.
std::vector<int> expert_argmax(const Tensor& probs);

/// FNV-1a hash over the leaky-ReLU pre-activation signs and the routing
/// argmax recorded in `cache`; equal hashes confirm an unchanged
/// CPWL linear region.
uint64_t activation_pattern_hash(ArgbModel& model, const EncodeCache& cache);

/// Throws std::invalid_argument unless x is N x 3 x H x W with finite values.
void validate_image(const Tensor& x);

}  // namespace argb
