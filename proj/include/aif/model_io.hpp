#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "aif/training.hpp"

namespace aif {

inline constexpr int kManifestVersion = 1;

/// manifest.json: kind, format version, full config, seeds, stage flags and
/// library versions.
nlohmann::ordered_json make_manifest(const std::string& kind, const TrainConfig& config);
void write_manifest(const std::filesystem::path& dir, const nlohmann::ordered_json& manifest);
nlohmann::ordered_json read_manifest(const std::filesystem::path& dir);

/// "aifb" or "aifd". Throws FormatError for directories without a manifest.
std::string model_kind(const std::filesystem::path& dir);

TrainConfig config_from_manifest(const nlohmann::ordered_json& manifest);

/// Copies the lexicons next to the checkpoints so a model directory is
/// self-contained.
void copy_text_resources(const std::filesystem::path& from, const std::filesystem::path& to);

}  // namespace aif
