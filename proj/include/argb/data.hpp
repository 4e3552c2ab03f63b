#pragma once

#include <string>
#include <vector>

#include "argb/rng.hpp"
#include "argb/tensor.hpp"

namespace argb::data {

struct PatchEntry {
  std::string file;    // relative to the store root
  std::string source;  // originating image (or "synth:<kind>")
  int x = 0, y = 0;    // crop origin in the source image
};

/// A directory of uniformly sized 8-bit RGB PNG patches described by a
/// JSON-lines manifest (file, source, x, y). Read-only after construction.
class PatchStore {
 public:
  static PatchStore create(const std::string& root);
  static PatchStore open(const std::string& root);

  /// Writes the patch as PNG and appends a manifest entry.
  void add(const Tensor& patch, const std::string& source, int x, int y);
  void save_manifest() const;

  size_t size() const { return entries_.size(); }
  Tensor load(size_t i) const;
  const std::vector<PatchEntry>& entries() const { return entries_; }
  const std::string& root() const { return root_; }
  int patch_size() const { return patch_size_; }

 private:
  std::string root_;
  std::vector<PatchEntry> entries_;
  int patch_size_ = 0;
};

struct AugmentPolicy {
  int crop_size = 256;
  bool hflip = true;
  bool vflip = true;
  bool rot90 = true;
};

/// Random crop, then horizontal/vertical flips, then a rotation drawn from
/// {0, 90, 180, 270} degrees, in that order.
Tensor augment(const Tensor& patch, const AugmentPolicy& policy, Rng& rng);

/// Tiles every decodable image in `image_dir` (sorted by filename) into a
/// size x size grid with the given stride. Undersized or unreadable images
/// are skipped with a warning; an empty result is an error.
PatchStore extract_patches(const std::string& image_dir, int size, int stride,
                           const std::string& out_root);

enum class SynthKind { gradients, checker, noise };
SynthKind synth_kind_from_string(const std::string& s);
const char* to_string(SynthKind k);

/// Generates one synthetic patch (values in [0,1]).
///   gradients: per-channel affine ramp
///   checker:   two-color checkerboard, cell size `checker_cell`
///              (0 selects size/8)
///   noise:     N(0.5, 0.5^2) samples clipped to [0,1]
Tensor synth_patch(SynthKind kind, int size, Rng& rng, int checker_cell = 0);

PatchStore synth_patches(SynthKind kind, int count, int size, Rng& rng,
                         const std::string& out_root, int checker_cell = 0);

/// Appends `count` patches of `kind` to an existing store.
void synth_into(PatchStore& store, SynthKind kind, int count, int size, Rng& rng,
                int checker_cell = 0);

}  // namespace argb::data
