#include "aif/losses.hpp"

#include <algorithm>
#include <cmath>

#include "aif/errors.hpp"

namespace aif {

namespace {

struct WeightField {
    const char* name;
    double LossWeights::*member;
};

constexpr WeightField kFields[] = {
    {"alpha", &LossWeights::alpha},
    {"beta", &LossWeights::beta},
    {"identity_lambda", &LossWeights::identity_lambda},
    {"lambda_c", &LossWeights::lambda_c},
    {"lambda_s", &LossWeights::lambda_s},
    {"lambda_gan", &LossWeights::lambda_gan},
    {"lambda_id", &LossWeights::lambda_id},
    {"aifb_lambda_ed", &LossWeights::aifb_lambda_ed},
    {"aifb_lambda_sm", &LossWeights::aifb_lambda_sm},
    {"aifb_lambda_as", &LossWeights::aifb_lambda_as},
    {"aifb_lambda_ae", &LossWeights::aifb_lambda_ae},
    {"finetune_lambda", &LossWeights::finetune_lambda},
    {"gamma", &LossWeights::gamma},
    {"lambda_dm", &LossWeights::lambda_dm},
    {"lambda_tm", &LossWeights::lambda_tm},
    {"aifd_lambda_ed", &LossWeights::aifd_lambda_ed},
    {"aifd_lambda_as", &LossWeights::aifd_lambda_as},
    {"aifd_lambda_ae", &LossWeights::aifd_lambda_ae},
};

torch::Tensor as_batch4(const torch::Tensor& x) {
    if (x.dim() == 3) return x.unsqueeze(0);
    if (x.dim() == 4) return x;
    throw ShapeError("expected a [C,H,W] or [B,C,H,W] feature map");
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw ShapeError(std::string(what) + ": shapes " + c10::str(a.sizes()) + " and " + c10::str(b.sizes()) +
                         " differ");
    }
}

void require_same_levels(const FeaturePyramid& a, const FeaturePyramid& b, const char* what) {
    if (a.size() != b.size()) throw ShapeError(std::string(what) + ": pyramids have different level counts");
}

}  // namespace

bool LossWeights::set(std::string_view name, double value) {
    for (const auto& f : kFields) {
        if (name == f.name) {
            if (!(value >= 0.0) || !std::isfinite(value)) {
                throw ConfigError("loss weight '" + std::string(name) + "' must be finite and non-negative");
            }
            this->*f.member = value;
            return true;
        }
    }
    return false;
}

double LossWeights::get(std::string_view name) const {
    for (const auto& f : kFields) {
        if (name == f.name) return this->*f.member;
    }
    throw ConfigError("unknown loss weight '" + std::string(name) + "'");
}

const std::vector<std::string>& LossWeights::names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& f : kFields) n.emplace_back(f.name);
        return n;
    }();
    return names;
}

torch::Tensor kl_divergence_loss(const torch::Tensor& target, const torch::Tensor& estimate) {
    if (target.sizes() != estimate.sizes() || target.size(-1) != kNumEmotions) {
        throw MalformedDistribution("KL inputs must both be [...,8]; got " + c10::str(target.sizes()) + " and " +
                                    c10::str(estimate.sizes()));
    }
    const auto t = target.to(estimate.scalar_type());
    const auto per_row = (torch::xlogy(t, t) - t * estimate.clamp_min(kKlEpsilon).log()).sum(-1);
    return per_row.mean();
}

torch::Tensor emotional_distribution_loss(const torch::Tensor& target, const torch::Tensor& images,
                                          EmotionEnsemble& ensemble, std::uint64_t crop_seed) {
    const auto batch = images.dim() == 3 ? images.unsqueeze(0) : images;
    auto t = target.dim() == 1 ? target.unsqueeze(0) : target;
    return kl_divergence_loss(t, ensemble.differentiable_distribution(batch, crop_seed));
}

torch::Tensor scaled_sentiment_distance(const torch::Tensor& vi, const torch::Tensor& vj, int dist) {
    require_same_shape(vi, vj, "sentiment distance");
    if (dist < 0) throw InvalidArgument("wheel distance must be non-negative");
    return (vi - vj).pow(2).sum(-1) / static_cast<double>(std::max(dist, 1));
}

torch::Tensor sentiment_metric_loss(const torch::Tensor& v_sed, const torch::Tensor& v_pos, const torch::Tensor& v_rel,
                                    const torch::Tensor& v_neg, const EmotionTuple& tuple, double alpha, double beta) {
    const auto d_pos = scaled_sentiment_distance(v_sed, v_pos, wheel_distance(tuple.sed, tuple.pos));
    const auto d_rel = scaled_sentiment_distance(v_sed, v_rel, wheel_distance(tuple.sed, tuple.rel));
    const auto d_neg = scaled_sentiment_distance(v_sed, v_neg, wheel_distance(tuple.sed, tuple.neg));
    return (torch::relu(d_pos - d_rel + alpha) + torch::relu(d_rel - d_neg + beta)).mean();
}

torch::Tensor anchor_sentiment_loss(const torch::Tensor& v_out, const torch::Tensor& v_acr) {
    require_same_shape(v_out, v_acr, "anchor sentiment loss");
    return (v_out - v_acr).pow(2).mean();
}

torch::Tensor content_loss(const FeaturePyramid& out, const FeaturePyramid& content) {
    require_same_levels(out, content, "content loss");
    torch::Tensor total;
    for (std::size_t i = 0; i < out.size(); ++i) {
        require_same_shape(out[i], content[i], "content loss");
        const auto term = (out[i] - content[i]).pow(2).mean();
        total = total.defined() ? total + term : term;
    }
    return total;
}

torch::Tensor feature_stat_difference(const torch::Tensor& a, const torch::Tensor& b) {
    const auto fa = as_batch4(a).flatten(2);
    const auto fb = as_batch4(b).flatten(2);
    if (fa.size(0) != fb.size(0) || fa.size(1) != fb.size(1)) {
        throw ShapeError("feature statistics need matching batch and channel counts");
    }
    const auto mean_gap = torch::linalg_vector_norm(fa.mean(2) - fb.mean(2), 2, {1});
    const auto var_gap = torch::linalg_vector_norm(fa.var(2, false) - fb.var(2, false), 2, {1});
    return (mean_gap + var_gap).mean();
}

torch::Tensor style_loss(const FeaturePyramid& out, const FeaturePyramid& reference) {
    require_same_levels(out, reference, "style loss");
    torch::Tensor total;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto term = feature_stat_difference(out[i], reference[i]);
        total = total.defined() ? total + term : term;
    }
    return total;
}

GanLosses gan_losses(const DiscriminatorOutputs& d) {
    auto clamp = [](const torch::Tensor& p) { return p.clamp(kGanEpsilon, 1.0 - kGanEpsilon); };
    const auto disc = -(clamp(d.real_uncond).log() + (1.0 - clamp(d.fake_uncond)).log() + clamp(d.real_cond).log() +
                        (1.0 - clamp(d.fake_cond)).log());
    const auto gen = -(clamp(d.fake_uncond).log() + clamp(d.fake_cond).log());
    return GanLosses{disc.mean(), gen.mean()};
}

torch::Tensor identity_loss(const torch::Tensor& identity_image, const torch::Tensor& anchor_image,
                            const FeaturePyramid& identity_features, const FeaturePyramid& anchor_features,
                            double lambda) {
    require_same_shape(identity_image, anchor_image, "identity loss");
    const auto pixel = (identity_image - anchor_image).pow(2).mean();
    return pixel + lambda * content_loss(identity_features, anchor_features);
}

torch::Tensor diffusion_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
    require_same_shape(eps_true, eps_pred, "diffusion loss");
    return (eps_pred - eps_true).pow(2).mean();
}

torch::Tensor texture_mapping_loss(const std::vector<torch::Tensor>& anchor_taps,
                                   const std::vector<torch::Tensor>& output_taps, double gamma) {
    if (anchor_taps.size() != output_taps.size() || anchor_taps.empty()) {
        throw ShapeError("texture mapping needs the same non-zero number of decoder taps on both sides");
    }
    torch::Tensor total;
    for (std::size_t k = 0; k < anchor_taps.size(); ++k) {
        const auto block = static_cast<double>(k + 1);
        const auto term = std::pow(gamma, block + 1.0) * feature_stat_difference(anchor_taps[k], output_taps[k]);
        total = total.defined() ? total + term : term;
    }
    return total;
}

}  // namespace aif
