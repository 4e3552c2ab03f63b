#pragma once

// Desk-scale training fixture shared by the longer test suites and the
// acceptance runner. Data stores and the trained desk checkpoint are cached
// under a directory (ARGB_ACCEPT_CACHE or ./acceptance_cache) keyed by the
// training config hash, so repeated runs skip the expensive work.

#include <string>

#include "argb/data.hpp"
#include "argb/model.hpp"
#include "argb/train.hpp"

namespace fixture {

inline constexpr uint64_t kDeskSeed = 20240817;

/// Desk training configuration used everywhere a trained model is needed.
argb::train::AETrainConfig desk_config();

std::string cache_dir();

struct DeskData {
  std::string train_dir;
  std::string val_dir;
};

/// Synthetic patches (gradients, checkerboards, clipped-normal noise) mixed
/// with 64px crops of the small photo fixtures; ~160 train / 24 val patches.
DeskData ensure_desk_data(const std::string& cache_root);

struct DeskModel {
  std::string ckpt;
  std::string log;
};

/// Trains the desk autoencoder once (about 10k steps) and caches it.
DeskModel ensure_desk_model(const std::string& cache_root);

/// Locates tests/fixtures regardless of the working directory.
std::string fixtures_dir();

}  // namespace fixture
