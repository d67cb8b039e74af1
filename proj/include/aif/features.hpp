#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace aif {

struct BackboneConfig {
    std::vector<std::int64_t> channels{16, 32, 64};
    std::vector<std::int64_t> strides{2, 2, 2};
    bool bias = false;
    std::uint64_t seed = 20240901;
};

/// Fixed convolutional feature network: one 3x3 convolution + ReLU per stage,
/// tapped after every stage. Weights are drawn from a private seeded generator
/// and never receive gradients.
class FeatureBackboneImpl : public torch::nn::Module {
public:
    explicit FeatureBackboneImpl(BackboneConfig config = {});

    /// Feature maps after each stage. Accepts [3,H,W] or [B,3,H,W]; the
    /// outputs keep the caller's batch convention.
    std::vector<torch::Tensor> forward(const torch::Tensor& images);

    std::int64_t levels() const { return static_cast<std::int64_t>(stages_.size()); }
    std::int64_t channels(std::int64_t level) const;
    std::int64_t total_stride() const;
    const BackboneConfig& config() const { return config_; }
    torch::ScalarType dtype() const { return stages_.front()->weight.scalar_type(); }

private:
    BackboneConfig config_;
    std::vector<torch::nn::Conv2d> stages_;
};
TORCH_MODULE(FeatureBackbone);

/// Multi-level feature maps, level i shaped [C_i,H_i,W_i] (or batched).
struct FeaturePyramid {
    std::vector<torch::Tensor> levels;

    std::size_t size() const { return levels.size(); }
    const torch::Tensor& operator[](std::size_t i) const { return levels[i]; }
};

/// Throws ShapeError naming the required multiple when H or W is not
/// divisible by the backbone's total stride.
FeaturePyramid extract_feature_pyramid(const torch::Tensor& image, FeatureBackbone& backbone);

/// G = F F^T / (H W) over the C x HW flattening. [C,H,W] -> [C,C],
/// [B,C,H,W] -> [B,C,C].
torch::Tensor gram_matrix(const torch::Tensor& feature);

struct SentimentConfig {
    std::int64_t n_gram = 32;
    std::int64_t projection_channels = 16;
    std::uint64_t seed = 20240902;
};

/// Backbone + fixed 1x1 projections; a sentiment vector concatenates the first
/// n_gram upper-triangular Gram elements (row-major, diagonal included) of
/// every level, in level order.
class SentimentExtractorImpl : public torch::nn::Module {
public:
    SentimentExtractorImpl(FeatureBackbone backbone, SentimentConfig config = {});

    /// [3,H,W] -> [D]; [B,3,H,W] -> [B,D] with D = n_gram * levels.
    torch::Tensor forward(const torch::Tensor& images);

    std::int64_t dimension() const;
    const SentimentConfig& config() const { return config_; }
    FeatureBackbone& backbone() { return backbone_; }

private:
    SentimentConfig config_;
    FeatureBackbone backbone_;
    std::vector<torch::nn::Conv2d> projections_;
    torch::Tensor rows_;
    torch::Tensor cols_;
};
TORCH_MODULE(SentimentExtractor);

torch::Tensor sentiment_vector(const torch::Tensor& image, SentimentExtractor& extractor);

/// Per-channel histograms over `bins` equal-width bins on [0,1], each channel
/// normalized to 1, concatenated R,G,B. The value 1.0 falls in the last bin.
torch::Tensor color_histogram(const torch::Tensor& image, std::int64_t bins = 16);

struct GlcmConfig {
    std::int64_t levels = 8;
    std::vector<std::pair<std::int64_t, std::int64_t>> offsets{{0, 1}, {1, 0}};  // (dy, dx)
};

/// Luma (0.299, 0.587, 0.114) quantized to `levels` gray levels, [H,W] int64.
torch::Tensor quantize_gray(const torch::Tensor& image, std::int64_t levels);

/// Symmetric co-occurrence matrix for one offset, normalized to sum 1.
torch::Tensor glcm_matrix(const torch::Tensor& image, std::pair<std::int64_t, std::int64_t> offset,
                          std::int64_t levels);

/// (contrast, energy, homogeneity, correlation) per offset, concatenated.
/// Homogeneity uses 1 / (1 + (i-j)^2); correlation of a constant image is 1.
torch::Tensor glcm_features(const torch::Tensor& image, const GlcmConfig& config = {});

struct PatchConfig {
    std::int64_t size = 32;
    std::int64_t count = 4;
};

/// Top-left corners of `count` uniformly placed crops.
std::vector<std::pair<std::int64_t, std::int64_t>> sample_patch_origins(std::int64_t height, std::int64_t width,
                                                                        const PatchConfig& config,
                                                                        std::mt19937_64& rng);

/// [K, C_last]: each crop through the backbone's final level, mean-pooled.
torch::Tensor patch_features(const torch::Tensor& image, std::mt19937_64& rng, const PatchConfig& config,
                             FeatureBackbone& backbone);

/// Per-level channel means and standard deviations, [B, 2 * sum C_i].
torch::Tensor style_statistics(const FeaturePyramid& pyramid);

}  // namespace aif
