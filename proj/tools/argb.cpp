// Command-line front end: data preparation, autoencoder training, loss and
// analysis commands, and the restoration demo. Every command writes its
// artifacts under --out together with a manifest.json recording the
// effective config hash, the seed and the produced files.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "argb/analysis.hpp"
#include "argb/checkpoint.hpp"
#include "argb/config.hpp"
#include "argb/data.hpp"
#include "argb/errors.hpp"
#include "argb/image_io.hpp"
#include "argb/kernels.hpp"
#include "argb/losses.hpp"
#include "argb/model.hpp"
#include "argb/plot.hpp"
#include "argb/restore.hpp"
#include "argb/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunContext {
  std::string command;
  fs::path out;
  json effective_config = json::object();
  uint64_t seed = 0;
  std::vector<std::string> files;

  static RunContext make(const std::string& command, std::string out_flag) {
    RunContext ctx;
    ctx.command = command;
    if (out_flag.empty()) {
      const char* root = std::getenv("ARGB_OUT");
      if (!root)
        throw argb::ConfigError("--out is required (or set the ARGB_OUT output root)");
      out_flag = std::string(root) + "/" + command;
    }
    ctx.out = out_flag;
    fs::create_directories(ctx.out);
    return ctx;
  }

  std::string path(const std::string& name) {
    files.push_back(name);
    return (out / name).string();
  }

  void finalize() {
    std::sort(files.begin(), files.end());
    json m;
    m["command"] = command;
    m["config_hash"] = argb::config::config_hash(effective_config);
    m["seed"] = seed;
    m["files"] = files;
    std::ofstream f(out / "manifest.json", std::ios::trunc);
    f << m.dump(2) << "\n";
  }
};

json merged_section(const argb::config::RunConfig& cfg, const std::string& section,
                    const json& flag_overrides) {
  json j = cfg.section(section);
  for (const auto& [k, v] : flag_overrides.items()) j[k] = v;
  // run everything through the schema validator once more
  json doc;
  doc[section] = j;
  argb::config::validate(doc);
  return j;
}

argb::ArgbModel load_encoder(const std::string& ckpt) {
  if (ckpt.empty()) throw argb::ConfigError("this command requires --ckpt");
  if (!fs::exists(ckpt)) throw argb::MissingInputError("checkpoint not found: " + ckpt);
  return argb::load_argb_model(ckpt).first;
}

argb::data::PatchStore open_store(const std::string& dir, const char* what) {
  if (dir.empty()) throw argb::ConfigError(std::string("missing --") + what);
  return argb::data::PatchStore::open(dir);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  f << j.dump(2) << "\n";
}

std::vector<double> parse_sigmas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw argb::ConfigError("empty --sigmas list");
  return out;
}

using argb::Tensor;

void write_trace_csv(const std::string& path, const std::vector<double>& trace,
                     const char* value_name) {
  std::ofstream f(path, std::ios::trunc);
  f << "step," << value_name << "\n";
  char buf[64];
  for (size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, trace[i]);
    f << buf;
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"aRGB representation space: training, restoration supervision and analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, val_dir, ckpt_path, image_path, image2_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file")->expected(1);
  app.add_option("--set", sets, "override a config key: section.key=value");

  // ---- prepare-data ----
  auto* prep = app.add_subcommand("prepare-data", "tile a directory of images into patches");
  std::string prep_src;
  int prep_size = 480, prep_stride = 240;
  prep->add_option("--src", prep_src, "image directory")->required();
  prep->add_option("--size", prep_size, "patch size (default 480)");
  prep->add_option("--stride", prep_stride, "grid stride (default 240)");
  prep->add_option("--out", out_dir, "output patch store");

  // ---- synth-data ----
  auto* synth = app.add_subcommand("synth-data", "generate synthetic patches");
  std::string synth_kinds = "gradients";
  int synth_count = 16, synth_size = 64, synth_cell = 0;
  uint64_t synth_seed = 0;
  synth->add_option("--kinds", synth_kinds, "comma list of gradients|checker|noise");
  synth->add_option("--count", synth_count, "total patch count");
  synth->add_option("--size", synth_size, "patch size");
  synth->add_option("--cell", synth_cell, "checker cell size (0 = size/8)");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", out_dir, "output patch store");

  // ---- train-argb ----
  auto* train_cmd = app.add_subcommand("train-argb", "train the aRGB autoencoder");
  std::string resume_path;
  train_cmd->add_option("--data", data_dir, "training patch store")->required();
  train_cmd->add_option("--val", val_dir, "held-out patch store for the final report");
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
  train_cmd->add_option("--out", out_dir, "output run directory");

  // ---- eval-argb ----
  auto* eval_cmd = app.add_subcommand("eval-argb", "reconstruction metrics of a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt_path, "autoencoder checkpoint")->required();
  eval_cmd->add_option("--data", data_dir, "evaluation patch store")->required();
  eval_cmd->add_option("--out", out_dir, "output directory");

  // ---- train-restorer ----
  auto* restore_cmd = app.add_subcommand("train-restorer", "denoising demo run");
  restore_cmd->add_option("--data", data_dir, "training patch store")->required();
  restore_cmd->add_option("--val", val_dir, "validation patch store")->required();
  restore_cmd->add_option("--ckpt", ckpt_path, "frozen aRGB encoder (argb loss space)");
  restore_cmd->add_option("--out", out_dir, "output run directory");

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "analysis commands");
  analyze->require_subcommand(1);
  std::string sigmas_flag = "0,0.02,0.05,0.1";
  int samples = 100, subsample = 1, stride_flag = 1, bins = 64, size_flag = 32;
  int expert_flag = 0, channel_flag = 0, steps_flag = -1;
  double lr_flag = -1.0, sigma_flag = 0.1;
  uint64_t seed_flag = 0;
  std::string kind_flag = "l1", space_flag = "both";

  auto add_common = [&](CLI::App* sub, bool needs_image) {
    sub->add_option("--ckpt", ckpt_path, "autoencoder checkpoint")->required();
    if (needs_image) sub->add_option("--image", image_path, "input image (PNG)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_flag, "rng seed");
  };

  auto* a_dec = analyze->add_subcommand("decompose", "orthogonal embedding decomposition");
  add_common(a_dec, true);
  auto* a_inv = analyze->add_subcommand("invert", "invert an image's own embedding");
  add_common(a_inv, true);
  a_inv->add_option("--steps", steps_flag, "iterations (default 50)");
  a_inv->add_option("--lr", lr_flag, "step size (default 0.1)");
  auto* a_mix = analyze->add_subcommand("mix", "invert a mixed embedding of two images");
  add_common(a_mix, true);
  a_mix->add_option("--image2", image2_path, "structure source image")->required();
  a_mix->add_option("--steps", steps_flag, "iterations (default 50)");
  a_mix->add_option("--lr", lr_flag, "step size (default 0.1)");
  auto* a_self = analyze->add_subcommand("self-ref", "self-reference map A df/dx");
  add_common(a_self, true);
  a_self->add_option("--stride", stride_flag, "pixel subsampling stride");
  auto* a_sweep = analyze->add_subcommand("metric-sweep", "RGB vs aRGB distances under AWGN");
  add_common(a_sweep, true);
  a_sweep->add_option("--sigmas", sigmas_flag, "comma list of noise levels");
  a_sweep->add_option("--samples", samples, "draws per level (default 100)");
  auto* a_map = analyze->add_subcommand("expert-map", "per-pixel expert assignment map");
  add_common(a_map, true);
  auto* a_exp = analyze->add_subcommand("export-embeddings", "embedding CSV for external t-SNE");
  add_common(a_exp, true);
  a_exp->add_option("--subsample", subsample, "pixel grid stride (default 1)");
  auto* a_grad = analyze->add_subcommand("grad-stats", "loss gradient histograms");
  add_common(a_grad, true);
  a_grad->add_option("--sigma", sigma_flag, "degradation noise level (default 0.1)");
  a_grad->add_option("--kind", kind_flag, "loss kind (default l1)");
  a_grad->add_option("--space", space_flag, "rgb | argb | both");
  a_grad->add_option("--bins", bins, "histogram bins (default 64)");
  auto* a_max = analyze->add_subcommand("max-filter", "activation maximization image");
  add_common(a_max, false);
  a_max->add_option("--expert", expert_flag, "expert index")->required();
  a_max->add_option("--channel", channel_flag, "output channel")->required();
  a_max->add_option("--size", size_flag, "image size (default 32)");
  a_max->add_option("--steps", steps_flag, "iterations (default 200)");
  a_max->add_option("--lr", lr_flag, "step size (default 1.0)");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  std::string run_dir;
  report_cmd->add_option("--run", run_dir, "run directory with manifest and logs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    throw argb::ConfigError(code == 0 ? "" : "invalid command line");
  }

  argb::config::RunConfig cfg;
  if (!config_path.empty()) cfg = argb::config::RunConfig::load_file(config_path);
  for (const auto& s : sets) cfg.set(s);

  // ---------------- command bodies ----------------

  if (*prep) {
    json flags;
    if (prep->count("--size")) flags["size"] = prep_size;
    if (prep->count("--stride")) flags["stride"] = prep_stride;
    const json d = merged_section(cfg, "data", flags);
    RunContext ctx = RunContext::make("prepare-data", out_dir);
    ctx.effective_config = {{"data", d}};
    const int size = d.value("size", prep_size), stride = d.value("stride", prep_stride);
    argb::data::PatchStore store =
        argb::data::extract_patches(prep_src, size, stride, (ctx.out / "store").string());
    ctx.files.push_back("store/manifest.jsonl");
    json summary{{"patches", store.size()}, {"size", size}, {"stride", stride}};
    write_json(ctx.path("prepare.json"), summary);
    ctx.finalize();
    std::printf("prepared %zu patches under %s\n", store.size(), store.root().c_str());
    return 0;
  }

  if (*synth) {
    json flags;
    if (synth->count("--kinds")) flags["kinds"] = synth_kinds;
    if (synth->count("--count")) flags["count"] = synth_count;
    if (synth->count("--size")) flags["size"] = synth_size;
    if (synth->count("--cell")) flags["cell"] = synth_cell;
    if (synth->count("--seed")) flags["seed"] = synth_seed;
    const json d = merged_section(cfg, "data", flags);
    RunContext ctx = RunContext::make("synth-data", out_dir);
    ctx.effective_config = {{"data", d}};
    ctx.seed = d.value("seed", synth_seed);

    std::vector<argb::data::SynthKind> kinds;
    std::stringstream ss(d.value("kinds", synth_kinds));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) kinds.push_back(argb::data::synth_kind_from_string(tok));
    if (kinds.empty()) throw argb::ConfigError("--kinds has no entries");

    const int total = d.value("count", synth_count);
    if (total < 1) throw argb::ConfigError("data.count must be >= 1");
    argb::Rng rng(ctx.seed);
    argb::data::PatchStore store = argb::data::PatchStore::create((ctx.out / "store").string());
    for (size_t i = 0; i < kinds.size(); ++i) {
      const int share = total / static_cast<int>(kinds.size()) +
                        (i < total % kinds.size() ? 1 : 0);
      if (share > 0)
        argb::data::synth_into(store, kinds[i], share, d.value("size", synth_size), rng,
                               d.value("cell", synth_cell));
    }
    store.save_manifest();
    ctx.files.push_back("store/manifest.jsonl");
    ctx.finalize();
    std::printf("synthesized %zu patches under %s\n", store.size(), store.root().c_str());
    return 0;
  }

  if (*train_cmd) {
    const json a = merged_section(cfg, "autoencoder", json::object());
    argb::train::AETrainConfig tc = argb::train::AETrainConfig::from_json(a);
    RunContext ctx = RunContext::make("train-argb", out_dir);
    ctx.effective_config = {{"autoencoder", tc.to_json()}};
    ctx.seed = tc.seed;

    argb::data::PatchStore ds = open_store(data_dir, "data");
    argb::ArgbModel model(tc.num_experts, tc.seed);
    argb::train::TrainResult res = argb::train::train_autoencoder(
        model, tc, ds, ctx.path("train_log.jsonl"), ctx.path("argb.ckpt"), resume_path);

    json summary{{"steps", res.log.size()},
                 {"final_l_recon", res.log.empty() ? 0.0 : res.log.back().l_recon},
                 {"final_l_balance", res.log.empty() ? 0.0 : res.log.back().l_balance}};
    if (!val_dir.empty()) {
      argb::data::PatchStore vs = open_store(val_dir, "val");
      argb::train::EvalResult ev = argb::train::evaluate_reconstruction(model, vs);
      summary["val_psnr"] = ev.mean_psnr;
      summary["val_avg_diff_255"] = ev.mean_abs_diff;
      std::printf("held-out reconstruction: %.3f dB (avg |diff| %.4f/255)\n", ev.mean_psnr,
                  ev.mean_abs_diff);
    }
    write_json(ctx.path("summary.json"), summary);
    ctx.finalize();
    return 0;
  }

  if (*eval_cmd) {
    RunContext ctx = RunContext::make("eval-argb", out_dir);
    argb::ArgbModel model = load_encoder(ckpt_path);
    argb::data::PatchStore ds = open_store(data_dir, "data");
    argb::train::EvalResult ev = argb::train::evaluate_reconstruction(model, ds);
    json j{{"psnr", ev.mean_psnr}, {"avg_diff_255", ev.mean_abs_diff}, {"patches", ev.count}};
    write_json(ctx.path("eval.json"), j);
    ctx.finalize();
    std::printf("reconstruction over %zu patches: %.3f dB, avg |diff| %.4f/255\n", ev.count,
                ev.mean_psnr, ev.mean_abs_diff);
    return 0;
  }

  if (*restore_cmd) {
    const json r = merged_section(cfg, "restorer", json::object());
    argb::restore::RestoreTrainConfig rc = argb::restore::RestoreTrainConfig::from_json(r);
    RunContext ctx = RunContext::make("train-restorer", out_dir);
    ctx.effective_config = {{"restorer", rc.to_json()}};
    ctx.seed = rc.seed;

    argb::data::PatchStore train_ds = open_store(data_dir, "data");
    argb::data::PatchStore val_ds = open_store(val_dir, "val");
    std::optional<argb::ArgbModel> encoder;
    if (rc.loss.space == argb::losses::LossSpace::argb) encoder.emplace(load_encoder(ckpt_path));

    argb::restore::TinyRestorer model(rc.seed);
    argb::restore::RestoreResult res = argb::restore::train_restorer(
        model, rc, encoder ? &*encoder : nullptr, train_ds, val_ds,
        ctx.path("restore_log.jsonl"));

    // side-by-side noisy | restored | clean triptychs
    argb::Rng trng = argb::Rng::substream(rc.seed + 1, 17);
    const size_t shown = std::min<size_t>(val_ds.size(), 4);
    for (size_t i = 0; i < shown; ++i) {
      const Tensor clean = val_ds.load(i);
      const Tensor noisy = argb::restore::degrade(clean, rc.sigma, trng);
      Tensor restored = argb::restore::quantize8(model.forward(noisy));
      const int H = clean.h(), W = clean.w();
      Tensor trip({1, 3, H, 3 * W});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            trip.at(0, c, y, x) = noisy.at(0, c, y, x);
            trip.at(0, c, y, W + x) = restored.at(0, c, y, x);
            trip.at(0, c, y, 2 * W + x) = clean.at(0, c, y, x);
          }
      char name[64];
      std::snprintf(name, sizeof(name), "triptych_%03zu.png", i);
      argb::save_png(ctx.path(name), trip);
    }

    json metrics{{"final_psnr", res.final_metrics.psnr},
                 {"final_ssim", res.final_metrics.ssim},
                 {"noisy_psnr", res.noisy_psnr},
                 {"encoder_hash_before", res.encoder_hash_before},
                 {"encoder_hash_after", res.encoder_hash_after}};
    write_json(ctx.path("metrics.json"), metrics);

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& [name, t] : model.named_tensors()) tensors.emplace_back(name, t);
    argb::save_checkpoint(ctx.path("restorer.ckpt"),
                          {{"kind", "tiny_restorer"}, {"config", rc.to_json()}}, tensors);
    ctx.finalize();
    std::printf("restored PSNR %.3f dB / SSIM %.4f (noisy input %.3f dB)\n",
                res.final_metrics.psnr, res.final_metrics.ssim, res.noisy_psnr);
    return 0;
  }

  if (*analyze) {
    const json an = merged_section(cfg, "analysis", json::object());
    argb::ArgbModel model = load_encoder(ckpt_path);

    auto load_image = [&](const std::string& p) {
      if (!fs::exists(p)) throw argb::MissingInputError("image not found: " + p);
      return argb::load_png(p);
    };
    auto sidecar = [&](RunContext& ctx, json params) {
      params["ckpt"] = ckpt_path;
      params["seed"] = ctx.seed;
      write_json(ctx.path(ctx.command + ".params.json"), params);
    };

    if (*a_dec) {
      RunContext ctx = RunContext::make("decompose", out_dir);
      const Tensor x = load_image(image_path);
      argb::EffectiveDecoder eff = model.effective_decoder();
      Tensor xi = model.encode(x);
      argb::analysis::Decomposition d = argb::analysis::decompose(xi, eff);

      auto norm_map = [](const Tensor& t) {
        Tensor m({1, 1, t.h(), t.w()});
        const size_t plane = static_cast<size_t>(t.h()) * t.w();
        for (size_t p = 0; p < plane; ++p) {
          double s = 0.0;
          for (int c = 0; c < t.c(); ++c) {
            const double v = t.v[static_cast<size_t>(c) * plane + p];
            s += v * v;
          }
          m.v[p] = static_cast<float>(std::sqrt(s));
        }
        return m;
      };
      argb::save_png(ctx.path("xi_par_norm.png"), argb::plot::normalize_map(norm_map(d.xi_par)));
      argb::save_png(ctx.path("xi_perp_norm.png"),
                     argb::plot::normalize_map(norm_map(d.xi_perp)));

      Tensor sum(xi.shape);
      for (size_t i = 0; i < xi.numel(); ++i)
        sum.v[i] = d.xi_par.v[i] + d.xi_perp.v[i] - xi.v[i];
      json stats{{"max_sum_residual", argb::kern::max_abs(sum.data(), sum.numel())},
                 {"rank", eff.rank},
                 {"rank_deficient", eff.rank_deficient}};
      write_json(ctx.path("decompose.json"), stats);
      sidecar(ctx, {{"image", image_path}});
      ctx.finalize();
      return 0;
    }

    if (*a_inv || *a_mix) {
      RunContext ctx = RunContext::make(*a_inv ? "invert" : "mix", out_dir);
      ctx.seed = seed_flag;
      argb::analysis::InversionConfig ic;
      ic.steps = steps_flag > 0 ? steps_flag : an.value("steps", 50);
      ic.lr = lr_flag > 0 ? lr_flag : an.value("lr", 0.1);
      ic.seed = seed_flag;

      const Tensor x1 = load_image(image_path);
      Tensor target;
      if (*a_mix) {
        const Tensor x2 = load_image(image2_path);
        if (x1.shape != x2.shape)
          throw argb::ConfigError("mix: --image and --image2 must have equal sizes");
        argb::EffectiveDecoder eff = model.effective_decoder();
        target = argb::analysis::mix_embeddings(model.encode(x1), model.encode(x2), eff);
      } else {
        target = model.encode(x1);
      }
      argb::analysis::InversionResult res = argb::analysis::invert(model, target, ic);
      argb::save_png(ctx.path("inverted.png"), res.image);
      write_trace_csv(ctx.path("trace.csv"), res.loss_trace, "loss");
      json params{{"image", image_path}, {"steps", ic.steps}, {"lr", ic.lr}};
      if (*a_mix) params["image2"] = image2_path;
      sidecar(ctx, params);
      ctx.finalize();
      std::printf("inversion loss %.6g -> %.6g\n", res.loss_trace.front(),
                  res.loss_trace.back());
      return 0;
    }

    if (*a_self) {
      RunContext ctx = RunContext::make("self-ref", out_dir);
      const Tensor x = load_image(image_path);
      const int stride = a_self->count("--stride") ? stride_flag : an.value("stride", 1);
      argb::analysis::SelfRefResult r = argb::analysis::self_reference(model, x, stride);
      argb::save_png(ctx.path("selfref_map.png"), argb::plot::normalize_map(r.map));
      json stats{{"mean", r.mean},
                 {"min", r.min},
                 {"max", r.max},
                 {"stride", r.stride},
                 {"evaluated_pixels", r.evaluated}};
      write_json(ctx.path("selfref.json"), stats);
      sidecar(ctx, {{"image", image_path}, {"stride", stride}});
      ctx.finalize();
      std::printf("self-reference: mean %.4f (min %.4f, max %.4f) over %zu pixels\n", r.mean,
                  r.min, r.max, r.evaluated);
      return 0;
    }

    if (*a_sweep) {
      RunContext ctx = RunContext::make("metric-sweep", out_dir);
      ctx.seed = seed_flag;
      const Tensor x = load_image(image_path);
      const std::vector<double> sigmas =
          parse_sigmas(a_sweep->count("--sigmas") ? sigmas_flag
                                                  : an.value("sigmas", sigmas_flag));
      const int n = a_sweep->count("--samples") ? samples : an.value("samples", 100);
      argb::Rng rng(seed_flag);
      auto rows = argb::analysis::metric_sweep(model, x, sigmas, n, rng);
      argb::analysis::write_sweep_csv(ctx.path("sweep.csv"), rows);
      std::vector<std::vector<double>> series(2);
      for (const auto& r : rows) {
        series[0].push_back(r.rgb_mean);
        series[1].push_back(r.argb_mean);
      }
      argb::plot::line_chart(ctx.path("sweep.png"), series);
      sidecar(ctx, {{"image", image_path}, {"sigmas", sigmas}, {"samples", n}});
      ctx.finalize();
      return 0;
    }

    if (*a_map) {
      RunContext ctx = RunContext::make("expert-map", out_dir);
      const Tensor x = load_image(image_path);
      argb::analysis::ExpertMap map = argb::analysis::expert_map(model, x);
      argb::analysis::write_expert_map_png(ctx.path("expert_map.png"), map,
                                           model.num_experts());
      std::ofstream csv(ctx.path("expert_map.csv"), std::ios::trunc);
      csv << "x,y,expert\n";
      for (int y = 0; y < map.height; ++y)
        for (int xx = 0; xx < map.width; ++xx)
          csv << xx << "," << y << "," << map.idx[static_cast<size_t>(y) * map.width + xx]
              << "\n";
      sidecar(ctx, {{"image", image_path}});
      ctx.finalize();
      return 0;
    }

    if (*a_exp) {
      RunContext ctx = RunContext::make("export-embeddings", out_dir);
      const Tensor x = load_image(image_path);
      const int sub = a_exp->count("--subsample") ? subsample : an.value("subsample", 1);
      argb::analysis::export_embeddings(ctx.path("embeddings.csv"), model, x, sub);
      sidecar(ctx, {{"image", image_path}, {"subsample", sub}});
      ctx.finalize();
      return 0;
    }

    if (*a_grad) {
      RunContext ctx = RunContext::make("grad-stats", out_dir);
      ctx.seed = seed_flag;
      const Tensor clean = load_image(image_path);
      const double sg = a_grad->count("--sigma") ? sigma_flag : an.value("sigma", 0.1);
      argb::Rng rng(seed_flag);
      const Tensor noisy = argb::restore::degrade(clean, sg, rng);

      json stats;
      double mean_abs[2] = {0.0, 0.0};
      const bool want_rgb = space_flag == "rgb" || space_flag == "both";
      const bool want_argb = space_flag == "argb" || space_flag == "both";
      if (!want_rgb && !want_argb)
        throw argb::ConfigError("unknown --space: " + space_flag + " (rgb | argb | both)");
      for (int pass = 0; pass < 2; ++pass) {
        if ((pass == 0 && !want_rgb) || (pass == 1 && !want_argb)) continue;
        argb::losses::LossSpec spec;
        spec.kind = argb::losses::kind_from_string(kind_flag);
        spec.space = pass == 0 ? argb::losses::LossSpace::rgb : argb::losses::LossSpace::argb;
        Tensor grad(clean.shape);
        (void)argb::losses::restoration_loss(spec, pass == 0 ? nullptr : &model, noisy, clean,
                                             &grad);
        argb::losses::GradStats gs = argb::losses::grad_stats(grad, bins);
        const char* name = pass == 0 ? "rgb" : "argb";
        argb::losses::write_grad_hist_csv(ctx.path(std::string("grad_hist_") + name + ".csv"),
                                          gs);
        argb::plot::histogram_chart(ctx.path(std::string("grad_hist_") + name + ".png"),
                                    gs.bin_edges, gs.counts);
        stats[name] = {{"mean_abs", gs.mean_abs},
                       {"max_abs", gs.max_abs},
                       {"frac_zero", gs.frac_zero}};
        mean_abs[pass] = gs.mean_abs;
      }
      if (want_rgb && want_argb && mean_abs[0] > 0.0)
        stats["mean_abs_ratio_argb_over_rgb"] = mean_abs[1] / mean_abs[0];
      write_json(ctx.path("grad_stats.json"), stats);
      sidecar(ctx, {{"image", image_path}, {"sigma", sg}, {"kind", kind_flag},
                    {"space", space_flag}, {"bins", bins}});
      ctx.finalize();
      return 0;
    }

    if (*a_max) {
      RunContext ctx = RunContext::make("max-filter", out_dir);
      ctx.seed = seed_flag;
      const int steps = steps_flag > 0 ? steps_flag : an.value("steps", 200);
      const double lr = lr_flag > 0 ? lr_flag : an.value("lr", 1.0);
      const int size = a_max->count("--size") ? size_flag : an.value("size", 32);
      argb::Rng rng(seed_flag);
      argb::analysis::MaximizeResult r =
          argb::analysis::maximize_filter(model, expert_flag, channel_flag, size, steps, lr, rng);
      argb::save_png(ctx.path("filter.png"), r.image);
      write_trace_csv(ctx.path("trace.csv"), r.trace, "activation");
      sidecar(ctx, {{"expert", expert_flag}, {"channel", channel_flag}, {"size", size},
                    {"steps", steps}, {"lr", lr}});
      ctx.finalize();
      std::printf("activation %.6g -> %.6g\n", r.trace.front(), r.trace.back());
      return 0;
    }
  }

  if (*report_cmd) {
    if (!fs::exists(fs::path(run_dir) / "manifest.json"))
      throw argb::MissingInputError("no manifest.json in " + run_dir);
    json manifest;
    std::ifstream(fs::path(run_dir) / "manifest.json") >> manifest;
    json rep{{"command", manifest.value("command", "")},
             {"config_hash", manifest.value("config_hash", "")},
             {"files", manifest.value("files", json::array())}};

    for (const char* log_name : {"train_log.jsonl", "restore_log.jsonl"}) {
      const fs::path lp = fs::path(run_dir) / log_name;
      if (!fs::exists(lp)) continue;
      std::ifstream lf(lp);
      std::string line;
      std::vector<double> losses;
      json last;
      while (std::getline(lf, line)) {
        if (line.empty()) continue;
        last = json::parse(line);
        losses.push_back(last.value("l_recon", last.value("loss", 0.0)));
      }
      if (!losses.empty()) {
        argb::plot::line_chart((fs::path(run_dir) / "loss_curve.png").string(), {losses}, 720,
                               440, true);
        rep["steps_logged"] = losses.size();
        rep["last_record"] = last;
      }
    }
    write_json((fs::path(run_dir) / "report.json").string(), rep);
    std::printf("%s\n", rep.dump(2).c_str());
    return 0;
  }

  return 0;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const argb::ConfigError& e) {
    if (e.what()[0] == '\0') return 0;  // --help
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const argb::MissingInputError& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return 3;
  } catch (const argb::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
