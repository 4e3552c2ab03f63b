#include "argb/config.hpp"

#include <fstream>
#include <map>
#include <set>

#include "argb/errors.hpp"

namespace argb::config {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"data", {"src", "out", "size", "stride", "kinds", "count", "cell", "seed"}},
      {"autoencoder",
       {"num_experts", "batch_size", "initial_lr", "lambda_balance", "noise_std", "patch_size",
        "seed", "total_steps", "first_period", "max_period", "printed_balance_form", "augment",
        "log_every", "save_every"}},
      {"loss", {"space", "kind", "weight", "charbonnier_eps"}},
      {"restorer",
       {"space", "kind", "weight", "charbonnier_eps", "steps", "batch", "lr", "grad_clip",
        "sigma", "seed", "log_every", "val_every", "max_cache_mb"}},
      {"analysis",
       {"steps", "lr", "sigmas", "samples", "subsample", "stride", "bins", "size", "channel",
        "expert", "seed", "sigma"}},
  };
  return s;
}

}  // namespace

void validate(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [section, value] : doc.items()) {
    auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown config section: " + section);
    if (!value.is_object()) throw ConfigError("config section must be an object: " + section);
    for (const auto& [key, v] : value.items())
      if (!it->second.count(key))
        throw ConfigError("unknown config key: " + section + "." + key);
  }
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("config file not found: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  validate(j);
  RunConfig c;
  c.doc = j;
  return c;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected section.key=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos)
    throw ConfigError("expected section.key=value, got: " + assignment);
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);

  auto it = schema().find(section);
  if (it == schema().end()) throw ConfigError("unknown config section: " + section);
  if (!it->second.count(key)) throw ConfigError("unknown config key: " + section + "." + key);

  nlohmann::json v;
  try {
    v = nlohmann::json::parse(value);
  } catch (...) {
    v = value;  // plain string
  }
  doc[section][key] = v;
}

std::string config_hash(const nlohmann::json& doc) {
  const std::string s = doc.dump();  // object keys are already sorted
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace argb::config
