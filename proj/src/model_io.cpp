#include "aif/model_io.hpp"

#include <opencv2/core/version.hpp>
#include <torch/version.h>

#include <fstream>

#include "aif/checkpoint.hpp"
#include "aif/errors.hpp"

namespace aif {

nlohmann::ordered_json make_manifest(const std::string& kind, const TrainConfig& config) {
    nlohmann::ordered_json m;
    m["kind"] = kind;
    m["format_version"] = kManifestVersion;
    m["checkpoint_version"] = TensorArchive::kCheckpointVersion;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config.entries()) cfg[k] = v;
    m["config"] = cfg;
    m["seeds"] = {{"run", config.seed}, {"backbone", BackboneConfig{}.seed}, {"sentiment", SentimentConfig{}.seed}};
    m["versions"] = {{"libtorch", TORCH_VERSION}, {"opencv", CV_VERSION}};
    m["stages"] = nlohmann::ordered_json::object();
    return m;
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::ordered_json& manifest) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

nlohmann::ordered_json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError(dir.string() + " has no manifest.json");
    try {
        auto m = nlohmann::ordered_json::parse(in);
        if (m.at("format_version").get<int>() != kManifestVersion) {
            throw FormatError("unsupported manifest version in " + dir.string());
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
    }
}

std::string model_kind(const std::filesystem::path& dir) { return read_manifest(dir).at("kind").get<std::string>(); }

TrainConfig config_from_manifest(const nlohmann::ordered_json& manifest) {
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& [k, v] : manifest.at("config").items()) entries.emplace_back(k, v.get<std::string>());
    return TrainConfig::from_entries(entries);
}

void copy_text_resources(const std::filesystem::path& from, const std::filesystem::path& to) {
    std::filesystem::create_directories(to);
    for (const char* name : {"vad_lexicon.tsv", "emotion_keywords.tsv"}) {
        if (std::filesystem::equivalent(from, to)) break;
        std::filesystem::copy_file(from / name, to / name, std::filesystem::copy_options::overwrite_existing);
    }
}

}  // namespace aif
