#include "argb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "argb/errors.hpp"
#include "argb/image_io.hpp"

namespace fs = std::filesystem;

namespace argb::data {

namespace {
std::string patch_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patch_%06zu.png", i);
  return buf;
}
}  // namespace

PatchStore PatchStore::create(const std::string& root) {
  fs::create_directories(root);
  PatchStore s;
  s.root_ = root;
  return s;
}

PatchStore PatchStore::open(const std::string& root) {
  const fs::path manifest = fs::path(root) / "manifest.jsonl";
  if (!fs::exists(manifest))
    throw MissingInputError("patch store manifest not found: " + manifest.string());
  PatchStore s;
  s.root_ = root;
  std::ifstream f(manifest);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    PatchEntry e;
    e.file = j.at("file").get<std::string>();
    e.source = j.at("source").get<std::string>();
    e.x = j.at("x").get<int>();
    e.y = j.at("y").get<int>();
    if (!fs::exists(fs::path(root) / e.file))
      throw MissingInputError("patch listed in manifest is missing: " + e.file);
    s.entries_.push_back(std::move(e));
  }
  if (!s.entries_.empty()) s.patch_size_ = s.load(0).h();
  return s;
}

void PatchStore::add(const Tensor& patch, const std::string& source, int x, int y) {
  PatchEntry e;
  e.file = patch_name(entries_.size());
  e.source = source;
  e.x = x;
  e.y = y;
  save_png((fs::path(root_) / e.file).string(), patch);
  if (patch_size_ == 0) patch_size_ = patch.h();
  entries_.push_back(std::move(e));
}

void PatchStore::save_manifest() const {
  std::ofstream f(fs::path(root_) / "manifest.jsonl", std::ios::trunc);
  for (const auto& e : entries_) {
    nlohmann::json j;
    j["file"] = e.file;
    j["source"] = e.source;
    j["x"] = e.x;
    j["y"] = e.y;
    f << j.dump() << "\n";
  }
}

Tensor PatchStore::load(size_t i) const {
  return load_png((fs::path(root_) / entries_[i].file).string());
}

Tensor augment(const Tensor& patch, const AugmentPolicy& policy, Rng& rng) {
  const int H = patch.h(), W = patch.w(), S = policy.crop_size;
  if (H < S || W < S)
    throw std::invalid_argument("augment: patch " + patch.shape_str() +
                                " smaller than crop size " + std::to_string(S));
  const int oy = H > S ? rng.below(H - S + 1) : 0;
  const int ox = W > S ? rng.below(W - S + 1) : 0;
  const bool hf = policy.hflip && rng.uniform() < 0.5;
  const bool vf = policy.vflip && rng.uniform() < 0.5;
  const int rot = policy.rot90 ? rng.below(4) : 0;

  Tensor out({1, 3, S, S});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        int sy = y, sx = x;
        // invert rotation, then flips, to find the source pixel
        for (int r = 0; r < rot; ++r) {
          const int ty = sy;
          sy = S - 1 - sx;  // inverse of 90 degree CCW rotation
          sx = ty;
        }
        if (vf) sy = S - 1 - sy;
        if (hf) sx = S - 1 - sx;
        out.at(0, c, y, x) = patch.at(0, c, oy + sy, ox + sx);
      }
  return out;
}

PatchStore extract_patches(const std::string& image_dir, int size, int stride,
                           const std::string& out_root) {
  if (!fs::is_directory(image_dir))
    throw MissingInputError("image directory not found: " + image_dir);
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(image_dir))
    if (de.is_regular_file()) files.push_back(de.path());
  std::sort(files.begin(), files.end());

  PatchStore store = PatchStore::create(out_root);
  for (const auto& p : files) {
    Tensor img;
    try {
      img = load_png(p.string());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping unreadable file %s (%s)\n", p.string().c_str(),
                   e.what());
      continue;
    }
    const int H = img.h(), W = img.w();
    if (H < size || W < size) {
      std::fprintf(stderr, "warning: skipping undersized image %s (%dx%d < %d)\n",
                   p.string().c_str(), W, H, size);
      continue;
    }
    for (int y = 0; y + size <= H; y += stride)
      for (int x = 0; x + size <= W; x += stride) {
        Tensor patch({1, 3, size, size});
        for (int c = 0; c < 3; ++c)
          for (int yy = 0; yy < size; ++yy)
            for (int xx = 0; xx < size; ++xx)
              patch.at(0, c, yy, xx) = img.at(0, c, y + yy, x + xx);
        store.add(patch, p.filename().string(), x, y);
      }
  }
  if (store.size() == 0)
    throw MissingInputError("no patches produced from " + image_dir);
  store.save_manifest();
  return store;
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "gradients") return SynthKind::gradients;
  if (s == "checker") return SynthKind::checker;
  if (s == "noise") return SynthKind::noise;
  throw ConfigError("unknown synthetic patch kind: " + s +
                    " (expected gradients | checker | noise)");
}

const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::gradients: return "gradients";
    case SynthKind::checker: return "checker";
    default: return "noise";
  }
}

Tensor synth_patch(SynthKind kind, int size, Rng& rng, int checker_cell) {
  Tensor p({1, 3, size, size});
  switch (kind) {
    case SynthKind::gradients: {
      for (int c = 0; c < 3; ++c) {
        const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
        const double off = rng.uniform(0.0, 1.0);
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            double v = off + gx * x / std::max(size - 1, 1) + gy * y / std::max(size - 1, 1);
            p.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
      }
      break;
    }
    case SynthKind::checker: {
      const int cell = checker_cell > 0 ? checker_cell : std::max(size / 8, 1);
      float col[2][3];
      for (auto& cc : col)
        for (int c = 0; c < 3; ++c) cc[c] = static_cast<float>(rng.uniform());
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const int which = ((y / cell) + (x / cell)) & 1;
          for (int c = 0; c < 3; ++c) p.at(0, c, y, x) = col[which][c];
        }
      break;
    }
    case SynthKind::noise: {
      for (auto& v : p.v)
        v = static_cast<float>(std::clamp(0.5 + 0.5 * rng.normal(), 0.0, 1.0));
      break;
    }
  }
  return p;
}

PatchStore synth_patches(SynthKind kind, int count, int size, Rng& rng,
                         const std::string& out_root, int checker_cell) {
  if (count < 1) throw ConfigError("synth_patches: count must be >= 1");
  PatchStore store = PatchStore::create(out_root);
  synth_into(store, kind, count, size, rng, checker_cell);
  store.save_manifest();
  return store;
}

void synth_into(PatchStore& store, SynthKind kind, int count, int size, Rng& rng,
                int checker_cell) {
  for (int i = 0; i < count; ++i) {
    Tensor p = synth_patch(kind, size, rng, checker_cell);
    store.add(p, std::string("synth:") + to_string(kind), 0, 0);
  }
}

}  // namespace argb::data
