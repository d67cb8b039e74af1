#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "aif/classifiers.hpp"
#include "aif/emotion.hpp"
#include "aif/features.hpp"

namespace aif {

/// Every weight and margin of both objectives, named as in run configs.
struct LossWeights {
    // Sentiment metric margins.
    double alpha = 0.02;
    double beta = 0.01;
    // Feature term inside the identity loss.
    double identity_lambda = 0.01;
    // AIF-B aesthetic composite.
    double lambda_c = 5.0;
    double lambda_s = 0.3;
    double lambda_gan = 3.0;
    double lambda_id = 2.0;
    // AIF-B full objective.
    double aifb_lambda_ed = 140.0;
    double aifb_lambda_sm = 30.0;
    double aifb_lambda_as = 600.0;
    double aifb_lambda_ae = 1.0;
    // Decoder fine-tuning: L_sm + finetune_lambda * L_s.
    double finetune_lambda = 0.01;
    // Texture mapping geometric weight.
    double gamma = 0.3;
    // AIF-D aesthetic composite.
    double lambda_dm = 1.0;
    double lambda_tm = 0.001;
    // AIF-D full objective.
    double aifd_lambda_ed = 10.0;
    double aifd_lambda_as = 10.0;
    double aifd_lambda_ae = 1.0;

    /// Returns false for an unknown name. Throws ConfigError for negatives.
    bool set(std::string_view name, double value);
    double get(std::string_view name) const;
    static const std::vector<std::string>& names();
};

/// Batch-mean KL(target || estimate) over [B,8] (or [8]) tensors, estimate
/// clamped at kKlEpsilon, 0 ln 0 = 0. Throws MalformedDistribution on shape
/// mismatch.
torch::Tensor kl_divergence_loss(const torch::Tensor& target, const torch::Tensor& estimate);

/// KL between target distributions and the ensemble's estimate for `images`.
torch::Tensor emotional_distribution_loss(const torch::Tensor& target, const torch::Tensor& images,
                                          EmotionEnsemble& ensemble,
                                          std::uint64_t crop_seed = EmotionEnsemble::kDefaultCropSeed);

/// ||Vi - Vj||^2 / max(dist, 1); one value per row for [B,D] inputs.
torch::Tensor scaled_sentiment_distance(const torch::Tensor& vi, const torch::Tensor& vj, int dist);

/// Two hinge terms over seed/positive/related/negative sentiment vectors,
/// distances scaled by the tuple's wheel distances. Batch-mean.
torch::Tensor sentiment_metric_loss(const torch::Tensor& v_sed, const torch::Tensor& v_pos, const torch::Tensor& v_rel,
                                    const torch::Tensor& v_neg, const EmotionTuple& tuple, double alpha, double beta);

/// Mean squared error between sentiment vectors.
torch::Tensor anchor_sentiment_loss(const torch::Tensor& v_out, const torch::Tensor& v_acr);

/// Sum over levels of the per-level mean squared error.
torch::Tensor content_loss(const FeaturePyramid& out, const FeaturePyramid& content);

/// ||mu(a) - mu(b)||_2 + ||var(a) - var(b)||_2 with per-channel spatial
/// statistics; batch-mean for 4-D inputs. Spatial sizes may differ.
torch::Tensor feature_stat_difference(const torch::Tensor& a, const torch::Tensor& b);

/// Sum over levels of feature_stat_difference.
torch::Tensor style_loss(const FeaturePyramid& out, const FeaturePyramid& reference);

/// Discriminator probabilities for real (anchor) and fake (generated) images
/// from the unconditional and text-conditional heads.
struct DiscriminatorOutputs {
    torch::Tensor real_uncond;
    torch::Tensor real_cond;
    torch::Tensor fake_uncond;
    torch::Tensor fake_cond;
};

struct GanLosses {
    torch::Tensor discriminator;  ///< -[log D(r) + log(1 - D(f))] summed over both heads
    torch::Tensor generator;      ///< -log D(f) summed over both heads
};

inline constexpr double kGanEpsilon = 1e-7;

/// Non-saturating adversarial losses; probabilities clamped to [eps, 1 - eps]
/// and batch-averaged.
GanLosses gan_losses(const DiscriminatorOutputs& d);

/// Pixel MSE + lambda * sum of per-level feature MSEs.
torch::Tensor identity_loss(const torch::Tensor& identity_image, const torch::Tensor& anchor_image,
                            const FeaturePyramid& identity_features, const FeaturePyramid& anchor_features,
                            double lambda = 0.01);

/// Mean squared error between true and predicted noise.
torch::Tensor diffusion_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred);

/// sum_{i=1..N} gamma^(i+1) F_dif(anchor_i, out_i); taps ordered from the
/// latent end of the decoder towards the pixel end.
torch::Tensor texture_mapping_loss(const std::vector<torch::Tensor>& anchor_taps,
                                   const std::vector<torch::Tensor>& output_taps, double gamma = 0.3);

template <class T>
struct AifbAestheticParts {
    T content{};
    T style{};
    T gan{};
    T identity{};
};

template <class T>
T aifb_aesthetic_loss(const AifbAestheticParts<T>& p, const LossWeights& w) {
    return p.content * w.lambda_c + p.style * w.lambda_s + p.gan * w.lambda_gan + p.identity * w.lambda_id;
}

template <class T>
T aifd_aesthetic_loss(const T& dm, const T& tm, const LossWeights& w) {
    return dm * w.lambda_dm + tm * w.lambda_tm;
}

template <class T>
struct AifbObjectiveParts {
    T ed{};
    T sm{};
    T as{};
    T ae{};
};

template <class T>
T aifb_total(const AifbObjectiveParts<T>& p, const LossWeights& w) {
    return p.ed * w.aifb_lambda_ed + p.sm * w.aifb_lambda_sm + p.as * w.aifb_lambda_as + p.ae * w.aifb_lambda_ae;
}

template <class T>
struct AifdObjectiveParts {
    T ed{};
    T as{};
    T ae{};
};

template <class T>
T aifd_total(const AifdObjectiveParts<T>& p, const LossWeights& w) {
    return p.ed * w.aifd_lambda_ed + p.as * w.aifd_lambda_as + p.ae * w.aifd_lambda_ae;
}

}  // namespace aif
