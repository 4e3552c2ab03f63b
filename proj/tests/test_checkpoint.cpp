#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "argb/checkpoint.hpp"
#include "argb/model.hpp"
#include "support/testutil.hpp"

using argb::ArgbModel;
using argb::Rng;
using argb::Tensor;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("argb_ck_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};
}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir td;
  Rng rng(5);
  Tensor a = testutil::random_tensor({3, 4, 2, 2}, rng);
  Tensor b = testutil::random_tensor({17}, rng);
  nlohmann::json meta;
  meta["kind"] = "test";
  meta["note"] = 42;
  const std::string path = (td.path / "t.ckpt").string();
  argb::save_checkpoint(path, meta, {{"alpha", &a}, {"beta", &b}});

  argb::LoadedCheckpoint ck = argb::load_checkpoint(path);
  CHECK(ck.meta.at("note") == 42);
  REQUIRE(ck.tensors.count("alpha") == 1);
  REQUIRE(ck.tensors.count("beta") == 1);
  CHECK(ck.tensors.at("alpha").shape == a.shape);
  CHECK(std::memcmp(ck.tensors.at("alpha").data(), a.data(), a.numel() * sizeof(float)) == 0);
  CHECK(std::memcmp(ck.tensors.at("beta").data(), b.data(), b.numel() * sizeof(float)) == 0);

  // writing the same content twice produces identical bytes
  const std::string path2 = (td.path / "t2.ckpt").string();
  argb::save_checkpoint(path2, meta, {{"alpha", &a}, {"beta", &b}});
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("model checkpoint restores every tensor") {
  TempDir td;
  ArgbModel m(3, 2024);
  const std::string path = (td.path / "model.ckpt").string();
  argb::save_argb_model(path, m, {{"step", 7}});

  auto [restored, meta] = argb::load_argb_model(path);
  CHECK(meta.at("step") == 7);
  CHECK(restored.num_experts() == 3);
  auto t1 = m.named_tensors();
  auto t2 = restored.named_tensors();
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].first == t2[i].first);
    CHECK(t1[i].second->v == t2[i].second->v);
  }
}

TEST_CASE("loader rejects foreign files and shape mismatches") {
  TempDir td;
  const std::string bogus = (td.path / "bogus.ckpt").string();
  std::ofstream(bogus) << "not a checkpoint";
  CHECK_THROWS(argb::load_checkpoint(bogus));

  Rng rng(6);
  Tensor a = testutil::random_tensor({4}, rng);
  const std::string path = (td.path / "t.ckpt").string();
  argb::save_checkpoint(path, {{"kind", "test"}}, {{"alpha", &a}});
  argb::LoadedCheckpoint ck = argb::load_checkpoint(path);
  Tensor wrong({5});
  CHECK_THROWS(argb::restore_into(ck, {{"alpha", &wrong}}));
  Tensor missing({4});
  CHECK_THROWS(argb::restore_into(ck, {{"gamma", &missing}}));
}
