#include "argb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace argb {

namespace {
constexpr char kMagic[8] = {'a', 'R', 'G', 'B', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  nlohmann::json manifest = meta;
  manifest["format_version"] = 1;
  nlohmann::json dir = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["dtype"] = "float32";
    e["offset"] = offset;
    e["numel"] = t->numel();
    dir.push_back(e);
    offset += t->numel() * sizeof(float);
  }
  manifest["tensors"] = dir;
  const std::string mstr = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kMagic, 8);
  const uint64_t mlen = mstr.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not an aRGB checkpoint: " + path);
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("truncated checkpoint manifest: " + path);

  LoadedCheckpoint ck;
  ck.meta = nlohmann::json::parse(mstr);
  const std::streampos blob_start = f.tellg();
  for (const auto& e : ck.meta.at("tensors")) {
    Tensor t(e.at("shape").get<std::vector<int>>());
    if (t.numel() != e.at("numel").get<size_t>())
      throw std::runtime_error("inconsistent tensor directory entry in " + path);
    f.seekg(blob_start + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated tensor data in " + path);
    ck.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

void restore_into(const LoadedCheckpoint& ck,
                  const std::vector<std::pair<std::string, Tensor*>>& dests) {
  for (const auto& [name, dst] : dests) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
    if (it->second.shape != dst->shape)
      throw std::runtime_error("shape mismatch for tensor " + name + ": checkpoint " +
                               it->second.shape_str() + " vs model " + dst->shape_str());
    dst->v = it->second.v;
  }
}

void save_argb_model(const std::string& path, ArgbModel& model, const nlohmann::json& extra) {
  nlohmann::json meta = extra;
  meta["kind"] = "argb_model";
  meta["K"] = model.num_experts();
  meta["C"] = model.embedding_dim();
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (auto& [name, t] : model.named_tensors()) tensors.emplace_back(name, t);
  save_checkpoint(path, meta, tensors);
}

std::pair<ArgbModel, nlohmann::json> load_argb_model(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "argb_model")
    throw std::runtime_error("checkpoint is not an argb model: " + path);
  ArgbModel model(ck.meta.at("K").get<int>());
  restore_into(ck, model.named_tensors());
  return {std::move(model), std::move(ck.meta)};
}

}  // namespace argb
