#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptrig/simulation.hpp"

namespace ptrig {

/// Canonical JSON form of a run configuration. Every field is written, so
/// the dump identifies the experiment completely.
nlohmann::json config_to_json(const RunConfig& config);

/// Parses and validates a configuration document. An "inherit" key names a
/// preset or a file (relative to `base_dir`) whose contents are merged
/// underneath the document. Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir = {});

RunConfig load_config(const std::filesystem::path& path);

/// Hash of the canonical dump with the seed left out, so runs that differ
/// only by seed share a fingerprint.
std::uint64_t config_fingerprint(const RunConfig& config);

std::vector<std::string> preset_names();
/// Raw preset document. Throws ConfigError for unknown names.
const std::string& preset_text(const std::string& name);
RunConfig load_preset(const std::string& name);

}  // namespace ptrig
