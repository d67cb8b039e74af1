#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "aif/affective_text.hpp"
#include "aif/emotion.hpp"

namespace aif {

enum class Split { train, val, test };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

/// One anchor image with its annotations and the palette-neutral content
/// rendering of the same scene.
struct AnchorSample {
    std::string id;
    Emotion label = Emotion::amusement;
    EmotionDistribution distribution;
    std::vector<std::string> descriptions;
    torch::Tensor image;    ///< anchor, [3,H,W] in [0,1]
    torch::Tensor content;  ///< content, [3,H,W] in [0,1]
    Split split = Split::train;
};

struct Dataset {
    std::vector<AnchorSample> samples;
    std::int64_t resolution = 64;

    std::vector<const AnchorSample*> subset(Split s) const;
    /// All descriptions, for building a vocabulary.
    std::vector<std::string> all_descriptions() const;
};

struct SyntheticConfig {
    std::int64_t per_category = 32;
    std::int64_t resolution = 64;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
};

/// Procedural corpus: every category has its own colour ramp and texture
/// family applied to random shape layouts. Deterministic for a given rng
/// state. Throws InvalidArgument below 8 samples per category.
Dataset generate_synthetic_dataset(const SyntheticConfig& config, std::mt19937_64& rng,
                                   const KeywordLexicon& keywords);

/// Palette-neutral grey rendering of a luminance field, [3,H,W].
torch::Tensor render_content(const torch::Tensor& luminance);
/// Category colour ramp applied to a luminance field, [3,H,W].
torch::Tensor render_palette(Emotion e, const torch::Tensor& luminance);

/// Writes images/<id>.png, content/<id>.png and meta.jsonl.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads the layout written by save_dataset. Images are area-resampled to
/// `resolution`. Without content/<id>.png the grey version of the anchor is
/// used; without a "split" field the split follows a hash of the id.
Dataset load_dataset(const std::filesystem::path& dir, std::int64_t resolution = 64);

/// Luma grey replicated over three channels.
torch::Tensor grayscale(const torch::Tensor& image);

/// 64-bit FNV-1a over the tensor's 8-bit quantized bytes.
std::uint64_t image_hash(const torch::Tensor& image);

}  // namespace aif
