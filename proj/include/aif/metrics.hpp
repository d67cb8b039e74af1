#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "aif/classifiers.hpp"
#include "aif/emotion.hpp"
#include "aif/features.hpp"

namespace aif {

struct SsimConfig {
    std::int64_t window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Mean structural similarity of two [3,H,W] images: uniform valid windows,
/// population statistics, computed per channel in float64 and averaged.
double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimConfig& config = {});

/// Style loss restricted to the first two backbone levels.
double shallow_style_difference(const torch::Tensor& a, const torch::Tensor& b, FeatureBackbone& backbone);

/// Euclidean distance between sentiment vectors.
double sentiment_gap(const torch::Tensor& out, const torch::Tensor& anchor, SentimentExtractor& extractor);

/// Fraction of images whose ensemble argmax equals the label.
/// Throws InvalidArgument on empty input or mismatched counts.
double ensemble_accuracy(const std::vector<torch::Tensor>& outputs, const std::vector<Emotion>& labels,
                         EmotionEnsemble& ensemble);
double ensemble_accuracy(const std::vector<EmotionDistribution>& predictions, const std::vector<Emotion>& labels);

/// (p_o - p_e) / (1 - p_e). Throws on length mismatch, empty input or p_e = 1.
double cohen_kappa(const std::vector<int>& r1, const std::vector<int>& r2);

/// Items x categories count matrix with the same number of raters per item.
/// Throws on unequal rater counts, fewer than two raters or P_e = 1.
double fleiss_kappa(const std::vector<std::vector<std::int64_t>>& ratings);

struct EvalReport {
    double ssim = 0;
    double ssd = 0;
    double sg = 0;
    double eacc = 0;
    /// Mean SG between content images and their anchors, the no-filter reference.
    double sg_content = 0;
    std::int64_t count = 0;

    std::string to_json() const;
};

}  // namespace aif
