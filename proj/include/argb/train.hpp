#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "argb/data.hpp"
#include "argb/model.hpp"
#include "argb/nn.hpp"
#include "argb/rng.hpp"

namespace argb::train {

struct AETrainConfig {
  int num_experts = 20;
  int batch_size = 16;
  double initial_lr = 5e-4;
  double lambda_balance = 0.01;
  double noise_std = 1.0;  // 0 disables the output-noise regularizer
  int patch_size = 256;
  uint64_t seed = 0;
  int64_t total_steps = 511000;
  int64_t first_period = 1000;   // cosine warm restarts, doubling period
  int64_t max_period = 256000;   // cap on the period length
  bool printed_balance_form = false;  // literal printed form, comparison only
  bool augment = true;
  int64_t log_every = 1;
  int64_t save_every = 0;  // periodic checkpoints; 0 = final only

  /// Scaled-down preset that exercises every schedule feature in minutes
  /// instead of days: 5 experts, 64px patches, 10k steps, restarts
  /// 250/500/1000/2000.
  static AETrainConfig desk(uint64_t seed);

  nlohmann::json to_json() const;
  static AETrainConfig from_json(const nlohmann::json& j);
};

/// Cosine learning-rate schedule with warm restarts: within each period
/// lr = lr0 * (1 + cos(pi * t/T)) / 2; the period starts at `first_period`
/// and doubles after every restart up to `max_period`.
double lr_at(const AETrainConfig& cfg, int64_t step);

/// Switch-Transformer balancing loss K * sum_k fr_k * P_k where fr_k is the
/// fraction of pixels routed to expert k (from the masks, a constant in
/// backprop) and P_k the mean router probability. Unity when the routing is
/// uniform. `printed_form` selects K^2 * sum_pixels max_k p_k instead.
double balance_loss(const Tensor& probs, const Tensor& masks, Tensor* dprobs = nullptr,
                    bool printed_form = false);

/// Mean L1 between g(f(x) + z) and x with z ~ N(0, noise_std^2 I) drawn
/// fresh per call. Training-path semantics (train-mode batch norm is NOT
/// used here; this is the measurement form of the loss).
double recon_loss(ArgbModel& model, const Tensor& x, double noise_std, Rng& rng);

struct TrainLogRecord {
  int64_t step = 0;  // 0-based step index
  double lr = 0.0, l_recon = 0.0, l_balance = 0.0, l_ae = 0.0;
};

/// Owns the optimization state; one step per call. The full state (model,
/// Adam moments, RNG, step counter) round-trips through checkpoints
/// bit-exactly.
class AETrainer {
 public:
  AETrainer(ArgbModel& model, const AETrainConfig& cfg, const data::PatchStore& ds);

  TrainLogRecord step();
  int64_t step_count() const { return step_; }
  ArgbModel& model() { return model_; }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  Tensor next_batch();

  ArgbModel& model_;
  AETrainConfig cfg_;
  std::vector<Tensor> patches_;  // decoded once up front
  nn::Adam adam_;
  Rng rng_;
  int64_t step_ = 0;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  std::string checkpoint_path;
};

/// Full training run: JSONL log (step, lr, l_recon, l_balance, l_ae) plus a
/// final checkpoint. Aborts with a diagnostic checkpoint on non-finite loss.
TrainResult train_autoencoder(ArgbModel& model, const AETrainConfig& cfg,
                              const data::PatchStore& dataset, const std::string& log_path,
                              const std::string& ckpt_path, const std::string& resume_from = "");

struct EvalResult {
  double mean_psnr = 0.0;       // no quantization, capped at 100 dB
  double mean_abs_diff = 0.0;   // scaled to the 255 range
  size_t count = 0;
};

EvalResult evaluate_reconstruction(ArgbModel& model, const data::PatchStore& ds);

/// PSNR on [0,1] images, capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b);

}  // namespace argb::train
