#include "argb/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "argb/checkpoint.hpp"
#include "argb/errors.hpp"
#include "argb/kernels.hpp"

namespace argb::train {

AETrainConfig AETrainConfig::desk(uint64_t seed) {
  AETrainConfig c;
  c.num_experts = 5;
  c.batch_size = 2;
  c.patch_size = 64;
  c.seed = seed;
  c.total_steps = 10000;
  c.first_period = 250;
  c.max_period = 2000;
  return c;
}

nlohmann::json AETrainConfig::to_json() const {
  return {{"num_experts", num_experts},
          {"batch_size", batch_size},
          {"initial_lr", initial_lr},
          {"lambda_balance", lambda_balance},
          {"noise_std", noise_std},
          {"patch_size", patch_size},
          {"seed", seed},
          {"total_steps", total_steps},
          {"first_period", first_period},
          {"max_period", max_period},
          {"printed_balance_form", printed_balance_form},
          {"augment", augment},
          {"log_every", log_every},
          {"save_every", save_every}};
}

AETrainConfig AETrainConfig::from_json(const nlohmann::json& j) {
  AETrainConfig c;
  c.num_experts = j.value("num_experts", c.num_experts);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.lambda_balance = j.value("lambda_balance", c.lambda_balance);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.seed = j.value("seed", c.seed);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.first_period = j.value("first_period", c.first_period);
  c.max_period = j.value("max_period", c.max_period);
  c.printed_balance_form = j.value("printed_balance_form", c.printed_balance_form);
  c.augment = j.value("augment", c.augment);
  c.log_every = j.value("log_every", c.log_every);
  c.save_every = j.value("save_every", c.save_every);
  if (c.batch_size < 1 || c.patch_size < 1 || c.total_steps < 1 || c.first_period < 1 ||
      c.max_period < c.first_period || c.initial_lr <= 0.0 || c.lambda_balance < 0.0 ||
      c.noise_std < 0.0 || c.num_experts < 1)
    throw ConfigError("autoencoder config has an out-of-range value");
  return c;
}

double lr_at(const AETrainConfig& cfg, int64_t step) {
  int64_t period = cfg.first_period;
  int64_t start = 0;
  while (step - start >= period) {
    start += period;
    period = std::min(period * 2, cfg.max_period);
  }
  const double t = static_cast<double>(step - start) / static_cast<double>(period);
  return cfg.initial_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

double balance_loss(const Tensor& probs, const Tensor& masks, Tensor* dprobs, bool printed_form) {
  if (!probs.same_shape(masks))
    throw std::invalid_argument("balance_loss: probs/masks shape mismatch");
  const int N = probs.n(), K = probs.c(), H = probs.h(), W = probs.w();
  const double m = static_cast<double>(N) * H * W;
  const size_t plane = static_cast<size_t>(H) * W;

  if (printed_form) {
    // Eq. as printed: K^2 * sum over pixels of the max router probability.
    double s = 0.0;
    for (int n = 0; n < N; ++n) {
      const float* p = probs.data() + probs.idx(n, 0, 0, 0);
      const float* mk = masks.data() + masks.idx(n, 0, 0, 0);
      for (size_t i = 0; i < plane; ++i)
        for (int k = 0; k < K; ++k)
          if (mk[k * plane + i] != 0.0f) {
            s += p[k * plane + i];
            if (dprobs)
              dprobs->v[probs.idx(n, k, 0, 0) + i] += static_cast<float>(K) * K;
          }
    }
    return static_cast<double>(K) * K * s;
  }

  double loss = 0.0;
  std::vector<double> fr(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    double mask_sum = 0.0, prob_sum = 0.0;
    for (int n = 0; n < N; ++n) {
      mask_sum += kern::sum(masks.data() + masks.idx(n, k, 0, 0), plane);
      prob_sum += kern::sum(probs.data() + probs.idx(n, k, 0, 0), plane);
    }
    fr[static_cast<size_t>(k)] = mask_sum / m;
    loss += K * (mask_sum / m) * (prob_sum / m);
  }
  if (dprobs) {
    for (int k = 0; k < K; ++k) {
      const float g = static_cast<float>(K * fr[static_cast<size_t>(k)] / m);
      for (int n = 0; n < N; ++n) {
        float* d = dprobs->data() + dprobs->idx(n, k, 0, 0);
        for (size_t i = 0; i < plane; ++i) d[i] += g;
      }
    }
  }
  return loss;
}

double recon_loss(ArgbModel& model, const Tensor& x, double noise_std, Rng& rng) {
  validate_image(x);
  if (noise_std < 0.0) throw std::invalid_argument("recon_loss: negative noise_std");
  Tensor xi = model.encode(x, false, nullptr);
  if (noise_std > 0.0)
    for (auto& v : xi.v) v += static_cast<float>(noise_std * rng.normal());
  Tensor y = model.decode(xi);
  return kern::sum_abs_diff(y.data(), x.data(), y.numel()) / static_cast<double>(y.numel());
}

// ---- trainer ----

AETrainer::AETrainer(ArgbModel& model, const AETrainConfig& cfg, const data::PatchStore& ds)
    : model_(model), cfg_(cfg), adam_(0.9, 0.999, 1e-8), rng_(Rng::substream(cfg.seed, 7)) {
  if (ds.size() == 0) throw MissingInputError("training dataset is empty");
  patches_.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) patches_.push_back(ds.load(i));
  for (const auto& p : patches_)
    if (p.h() < cfg_.patch_size || p.w() < cfg_.patch_size)
      throw ConfigError("dataset patch " + p.shape_str() + " smaller than configured patch_size " +
                        std::to_string(cfg_.patch_size));
}

Tensor AETrainer::next_batch() {
  const int S = cfg_.patch_size;
  Tensor batch({cfg_.batch_size, 3, S, S});
  data::AugmentPolicy pol;
  pol.crop_size = S;
  pol.hflip = pol.vflip = pol.rot90 = cfg_.augment;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const size_t i = static_cast<size_t>(rng_.below(static_cast<int>(patches_.size())));
    Tensor p = cfg_.augment || patches_[i].h() != S || patches_[i].w() != S
                   ? data::augment(patches_[i], pol, rng_)
                   : patches_[i];
    std::copy(p.v.begin(), p.v.end(), batch.v.begin() + static_cast<size_t>(b) * p.numel());
  }
  return batch;
}

TrainLogRecord AETrainer::step() {
  const Tensor x = next_batch();

  EncodeCache cache;
  Tensor xi = model_.encode(x, /*training=*/true, &cache);
  if (cfg_.noise_std > 0.0)
    for (auto& v : xi.v) v += static_cast<float>(cfg_.noise_std * rng_.normal());

  nn::NetCache dec_cache;
  Tensor y = model_.decoder().forward(xi, /*training=*/true, &dec_cache);

  const size_t n = y.numel();
  const double l_recon = kern::sum_abs_diff(y.data(), x.data(), n) / static_cast<double>(n);

  Tensor dprobs(cache.probs.shape);
  const double l_bal =
      balance_loss(cache.probs, cache.masks, &dprobs, cfg_.printed_balance_form);
  const double l_ae = l_recon + cfg_.lambda_balance * l_bal;

  if (!std::isfinite(l_ae))
    throw NumericalError("non-finite training loss at step " + std::to_string(step_) +
                         " (l_recon=" + std::to_string(l_recon) +
                         ", l_balance=" + std::to_string(l_bal) + ")");

  auto params = model_.params();
  nn::zero_grads(params);

  // L1 reconstruction backward
  Tensor dy(y.shape);
  const float inv = 1.0f / static_cast<float>(n);
  for (size_t i = 0; i < n; ++i) {
    const float d = y.v[i] - x.v[i];
    dy.v[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
  }
  Tensor dxi = model_.decoder().backward(dy, dec_cache, true, true);
  model_.encode_backward(dxi, cache, /*need_dx=*/false, /*pgrads=*/true);

  // balancing loss backward (router only; masks are constants)
  kern::scale(static_cast<float>(cfg_.lambda_balance), dprobs.data(), dprobs.numel());
  model_.router_backward(dprobs, cache, /*pgrads=*/true);

  const double lr = lr_at(cfg_, step_);
  adam_.step(params, lr);

  TrainLogRecord rec;
  rec.step = step_;
  rec.lr = lr;
  rec.l_recon = l_recon;
  rec.l_balance = l_bal;
  rec.l_ae = l_ae;
  ++step_;
  return rec;
}

void AETrainer::save_checkpoint(const std::string& path) const {
  nlohmann::json meta;
  meta["kind"] = "argb_model";
  meta["K"] = model_.num_experts();
  meta["C"] = model_.embedding_dim();
  meta["step"] = step_;
  meta["adam_t"] = adam_.t;
  meta["config"] = cfg_.to_json();
  const auto st = rng_.state();
  meta["rng_state"] = std::vector<uint64_t>(st.begin(), st.end());

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  auto named = const_cast<ArgbModel&>(model_).named_tensors();
  for (auto& [name, t] : named) tensors.emplace_back(name, t);
  auto params = const_cast<ArgbModel&>(model_).params();
  for (size_t i = 0; i < adam_.m.size(); ++i) {
    tensors.emplace_back("adam.m." + params[i].first, &adam_.m[i]);
    tensors.emplace_back("adam.v." + params[i].first, &adam_.v[i]);
  }
  argb::save_checkpoint(path, meta, tensors);
}

void AETrainer::load_checkpoint(const std::string& path) {
  LoadedCheckpoint ck = argb::load_checkpoint(path);
  if (ck.meta.at("K").get<int>() != model_.num_experts())
    throw ConfigError("checkpoint expert count differs from the configured model");
  restore_into(ck, model_.named_tensors());
  step_ = ck.meta.at("step").get<int64_t>();
  adam_.t = ck.meta.at("adam_t").get<int64_t>();
  const auto rs = ck.meta.at("rng_state").get<std::vector<uint64_t>>();
  rng_.set_state({rs[0], rs[1], rs[2], rs[3]});

  auto params = model_.params();
  adam_.m.clear();
  adam_.v.clear();
  for (auto& [name, p] : params) {
    auto mi = ck.tensors.find("adam.m." + name);
    auto vi = ck.tensors.find("adam.v." + name);
    if (mi == ck.tensors.end() || vi == ck.tensors.end())
      throw ConfigError("checkpoint lacks optimizer state for " + name);
    adam_.m.push_back(mi->second);
    adam_.v.push_back(vi->second);
  }
}

TrainResult train_autoencoder(ArgbModel& model, const AETrainConfig& cfg,
                              const data::PatchStore& dataset, const std::string& log_path,
                              const std::string& ckpt_path, const std::string& resume_from) {
  AETrainer trainer(model, cfg, dataset);
  if (!resume_from.empty()) trainer.load_checkpoint(resume_from);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open log for writing: " + log_path);
  }

  TrainResult res;
  char buf[256];
  while (trainer.step_count() < cfg.total_steps) {
    TrainLogRecord rec;
    try {
      rec = trainer.step();
    } catch (const NumericalError&) {
      if (!ckpt_path.empty()) trainer.save_checkpoint(ckpt_path + ".diag");
      throw;
    }
    res.log.push_back(rec);
    if (log.is_open() && (rec.step % cfg.log_every == 0 || rec.step + 1 == cfg.total_steps)) {
      std::snprintf(buf, sizeof(buf),
                    "{\"step\":%lld,\"lr\":%.9g,\"l_recon\":%.9g,\"l_balance\":%.9g,"
                    "\"l_ae\":%.9g}\n",
                    static_cast<long long>(rec.step), rec.lr, rec.l_recon, rec.l_balance,
                    rec.l_ae);
      log << buf;
    }
    if (!ckpt_path.empty() && cfg.save_every > 0 && trainer.step_count() % cfg.save_every == 0)
      trainer.save_checkpoint(ckpt_path);
  }
  if (!ckpt_path.empty()) {
    trainer.save_checkpoint(ckpt_path);
    res.checkpoint_path = ckpt_path;
  }
  return res;
}

double psnr(const Tensor& a, const Tensor& b) {
  const double mse = kern::sum_sq_diff(a.data(), b.data(), a.numel()) / static_cast<double>(a.numel());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

EvalResult evaluate_reconstruction(ArgbModel& model, const data::PatchStore& ds) {
  if (ds.size() == 0) throw MissingInputError("evaluation dataset is empty");
  EvalResult r;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Tensor x = ds.load(i);
    Tensor y = model.decode(model.encode(x));
    r.mean_psnr += psnr(y, x);
    r.mean_abs_diff +=
        255.0 * kern::sum_abs_diff(y.data(), x.data(), y.numel()) / static_cast<double>(y.numel());
  }
  r.count = ds.size();
  r.mean_psnr /= static_cast<double>(r.count);
  r.mean_abs_diff /= static_cast<double>(r.count);
  return r;
}

}  // namespace argb::train
