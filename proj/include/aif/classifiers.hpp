#pragma once

#include <torch/torch.h>

#include <array>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "aif/checkpoint.hpp"
#include "aif/emotion.hpp"
#include "aif/features.hpp"

namespace aif {

/// The four viewpoints of the voting ensemble.
enum class Perspective : int { color = 0, texture = 1, style = 2, patch = 3 };
inline constexpr int kNumPerspectives = 4;
inline constexpr std::array<Perspective, kNumPerspectives> kAllPerspectives = {
    Perspective::color, Perspective::texture, Perspective::style, Perspective::patch};

std::string_view perspective_name(Perspective p);
/// Style and patch features flow through the backbone and carry gradients.
constexpr bool is_differentiable(Perspective p) { return p == Perspective::style || p == Perspective::patch; }

/// Per-classifier votes; validation accuracies in practice.
struct EnsembleWeights {
    std::vector<double> w;

    /// Throws InvalidArgument for negative entries or a zero total, and when
    /// the count differs from `expected`.
    void validate(std::size_t expected) const;
};

/// Maps one image to a distribution over the wheel.
using EmotionEstimator = std::function<EmotionDistribution(const torch::Tensor& image)>;

/// phi_i = sum_j phi^j_i w^j / sum_j w^j.
EmotionDistribution ensemble_distribution(std::span<const EmotionDistribution> outputs, const EnsembleWeights& weights);

/// Runs every estimator on `image` and combines the votes.
EmotionDistribution ensemble_distribution(const torch::Tensor& image, std::span<const EmotionEstimator> classifiers,
                                          const EnsembleWeights& weights);

/// Batched form over [B,8] probability tensors.
torch::Tensor ensemble_distribution(const std::vector<torch::Tensor>& probabilities, const EnsembleWeights& weights);

struct EnsembleConfig {
    std::int64_t hist_bins = 16;
    GlcmConfig glcm{};
    PatchConfig patch{};
    std::int64_t hidden = 64;
};

/// Single-hidden-layer network over standardized features.
class PerspectiveClassifierImpl : public torch::nn::Module {
public:
    PerspectiveClassifierImpl(std::int64_t in_features, std::int64_t hidden);

    /// Logits [B,8].
    torch::Tensor forward(const torch::Tensor& features);
    void set_normalization(const torch::Tensor& mean, const torch::Tensor& stddev);
    std::int64_t in_features() const { return in_features_; }

private:
    std::int64_t in_features_;
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
    torch::Tensor mean_;
    torch::Tensor std_;
};
TORCH_MODULE(PerspectiveClassifier);

/// Colour, texture, style and patch classifiers over a shared fixed backbone,
/// combined by accuracy-weighted voting.
class EmotionEnsemble {
public:
    static constexpr std::uint64_t kDefaultCropSeed = 0x5eed;

    explicit EmotionEnsemble(FeatureBackbone backbone, EnsembleConfig config = {});

    /// Feature rows for a batch [B,3,H,W]. Patch features give B*K rows,
    /// image-major; crops for image b are drawn from seed + b.
    torch::Tensor features(Perspective p, const torch::Tensor& images, std::uint64_t seed = kDefaultCropSeed);
    std::int64_t feature_size(Perspective p) const;

    /// [B,8] probabilities of one perspective (patch averages its crops).
    torch::Tensor probabilities(Perspective p, const torch::Tensor& images, std::uint64_t seed = kDefaultCropSeed);

    /// Ensemble value of every perspective; gradients reach `images` only
    /// through the style and patch perspectives.
    torch::Tensor differentiable_distribution(const torch::Tensor& images, std::uint64_t seed = kDefaultCropSeed);

    std::array<EmotionDistribution, kNumPerspectives> perspective_distributions(const torch::Tensor& image);
    EmotionDistribution distribution(const torch::Tensor& image);

    /// One estimator per perspective, in kAllPerspectives order.
    std::vector<EmotionEstimator> estimators();

    PerspectiveClassifier& classifier(Perspective p) { return classifiers_[static_cast<std::size_t>(p)]; }
    const EnsembleWeights& weights() const { return weights_; }
    void set_weights(EnsembleWeights w);
    FeatureBackbone& backbone() { return backbone_; }
    const EnsembleConfig& config() const { return config_; }

    /// Classifier parameters and weights in or out of a checkpoint.
    void archive(TensorArchive& archive, const std::string& prefix) const;
    void restore(const TensorArchive& archive, const std::string& prefix);
    void to(torch::Dtype dtype);
    void freeze();

private:
    EnsembleConfig config_;
    FeatureBackbone backbone_;
    std::vector<PerspectiveClassifier> classifiers_;
    EnsembleWeights weights_;
};

/// w_j = top-1 accuracy of estimator j on the labelled images.
/// Throws InvalidArgument for an empty split or mismatched counts.
EnsembleWeights fit_ensemble_weights(std::span<const EmotionEstimator> classifiers,
                                     const std::vector<torch::Tensor>& images, const std::vector<Emotion>& labels);

}  // namespace aif
