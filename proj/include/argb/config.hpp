#pragma once

#include <string>

#include <json.hpp>

namespace argb::config {

/// Run configuration document with sections
/// data / autoencoder / loss / restorer / analysis. Unknown keys are
/// rejected with their dotted path.
struct RunConfig {
  nlohmann::json doc = nlohmann::json::object();

  static RunConfig load_file(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j);

  /// Applies "section.key=value" (value parsed as JSON when possible,
  /// else taken as a string). Validates the key against the schema.
  void set(const std::string& assignment);

  nlohmann::json section(const std::string& name) const {
    return doc.contains(name) ? doc.at(name) : nlohmann::json::object();
  }
};

/// Validates a document against the known schema; throws ConfigError naming
/// the offending path.
void validate(const nlohmann::json& doc);

/// FNV-1a over the canonical (sorted-key) serialization.
std::string config_hash(const nlohmann::json& doc);

}  // namespace argb::config
