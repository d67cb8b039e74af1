#include "aif/classifiers.hpp"

#include <numeric>

#include "aif/errors.hpp"

namespace aif {

std::string_view perspective_name(Perspective p) {
    switch (p) {
        case Perspective::color: return "color";
        case Perspective::texture: return "texture";
        case Perspective::style: return "style";
        case Perspective::patch: return "patch";
    }
    return "unknown";
}

void EnsembleWeights::validate(std::size_t expected) const {
    if (w.size() != expected) {
        throw InvalidArgument("got " + std::to_string(w.size()) + " ensemble weights for " + std::to_string(expected) +
                              " classifiers");
    }
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0)) throw InvalidArgument("ensemble weights must be non-negative");
        total += v;
    }
    if (!(total > 0.0)) throw InvalidArgument("ensemble weights sum to zero");
}

EmotionDistribution ensemble_distribution(std::span<const EmotionDistribution> outputs, const EnsembleWeights& weights) {
    weights.validate(outputs.size());
    const double total = std::accumulate(weights.w.begin(), weights.w.end(), 0.0);
    std::array<double, kNumEmotions> acc{};
    for (std::size_t j = 0; j < outputs.size(); ++j) {
        for (int i = 0; i < kNumEmotions; ++i) acc[static_cast<std::size_t>(i)] += outputs[j][i] * weights.w[j];
    }
    double sum = 0.0;
    for (auto& v : acc) {
        v /= total;
        sum += v;
    }
    // Division can leave the sum a few ulps off 1.
    for (auto& v : acc) v /= sum;
    return EmotionDistribution::from_probs(acc);
}

EmotionDistribution ensemble_distribution(const torch::Tensor& image, std::span<const EmotionEstimator> classifiers,
                                          const EnsembleWeights& weights) {
    weights.validate(classifiers.size());
    std::vector<EmotionDistribution> outputs;
    outputs.reserve(classifiers.size());
    for (const auto& c : classifiers) outputs.push_back(c(image));
    return ensemble_distribution(outputs, weights);
}

torch::Tensor ensemble_distribution(const std::vector<torch::Tensor>& probabilities, const EnsembleWeights& weights) {
    weights.validate(probabilities.size());
    const double total = std::accumulate(weights.w.begin(), weights.w.end(), 0.0);
    torch::Tensor acc;
    for (std::size_t j = 0; j < probabilities.size(); ++j) {
        const auto term = probabilities[j] * (weights.w[j] / total);
        acc = acc.defined() ? acc + term : term;
    }
    return acc;
}

PerspectiveClassifierImpl::PerspectiveClassifierImpl(std::int64_t in_features, std::int64_t hidden)
    : in_features_(in_features) {
    fc1_ = register_module("fc1", torch::nn::Linear(in_features, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, kNumEmotions));
    mean_ = register_buffer("feature_mean", torch::zeros({in_features}));
    std_ = register_buffer("feature_std", torch::ones({in_features}));
}

torch::Tensor PerspectiveClassifierImpl::forward(const torch::Tensor& features) {
    if (features.dim() != 2 || features.size(1) != in_features_) {
        throw ShapeError("classifier expects [B," + std::to_string(in_features_) + "] features");
    }
    const auto x = (features - mean_) / std_;
    return fc2_(torch::relu(fc1_(x)));
}

void PerspectiveClassifierImpl::set_normalization(const torch::Tensor& mean, const torch::Tensor& stddev) {
    torch::NoGradGuard no_grad;
    mean_.copy_(mean);
    std_.copy_(stddev.clamp_min(1e-6));
}

EmotionEnsemble::EmotionEnsemble(FeatureBackbone backbone, EnsembleConfig config)
    : config_(std::move(config)), backbone_(std::move(backbone)) {
    for (auto p : kAllPerspectives) classifiers_.emplace_back(feature_size(p), config_.hidden);
    weights_.w.assign(kNumPerspectives, 1.0);
}

std::int64_t EmotionEnsemble::feature_size(Perspective p) const {
    switch (p) {
        case Perspective::color: return 3 * config_.hist_bins;
        case Perspective::texture: return 4 * static_cast<std::int64_t>(config_.glcm.offsets.size());
        case Perspective::style: {
            std::int64_t c = 0;
            for (std::int64_t i = 0; i < backbone_->levels(); ++i) c += backbone_->channels(i);
            return 2 * c;
        }
        case Perspective::patch: return backbone_->channels(backbone_->levels() - 1);
    }
    return 0;
}

torch::Tensor EmotionEnsemble::features(Perspective p, const torch::Tensor& images, std::uint64_t seed) {
    if (images.dim() != 4) throw ShapeError("ensemble features expect a [B,3,H,W] batch");
    const auto dtype = backbone_->dtype();
    std::vector<torch::Tensor> rows;
    switch (p) {
        case Perspective::color:
            for (std::int64_t b = 0; b < images.size(0); ++b) rows.push_back(color_histogram(images[b], config_.hist_bins));
            return torch::stack(rows).to(dtype);
        case Perspective::texture:
            for (std::int64_t b = 0; b < images.size(0); ++b) rows.push_back(glcm_features(images[b], config_.glcm));
            return torch::stack(rows).to(dtype);
        case Perspective::style:
            return style_statistics(extract_feature_pyramid(images, backbone_));
        case Perspective::patch:
            for (std::int64_t b = 0; b < images.size(0); ++b) {
                std::mt19937_64 rng(seed + static_cast<std::uint64_t>(b));
                rows.push_back(patch_features(images[b], rng, config_.patch, backbone_));
            }
            return torch::cat(rows);
    }
    throw InvalidArgument("unknown perspective");
}

torch::Tensor EmotionEnsemble::probabilities(Perspective p, const torch::Tensor& images, std::uint64_t seed) {
    const auto logits = classifier(p)->forward(features(p, images, seed));
    auto probs = torch::softmax(logits, 1);
    if (p == Perspective::patch) probs = probs.reshape({images.size(0), config_.patch.count, kNumEmotions}).mean(1);
    return probs;
}

torch::Tensor EmotionEnsemble::differentiable_distribution(const torch::Tensor& images, std::uint64_t seed) {
    std::vector<torch::Tensor> probs;
    for (auto p : kAllPerspectives) {
        auto pr = probabilities(p, images, seed);
        probs.push_back(is_differentiable(p) ? pr : pr.detach());
    }
    return ensemble_distribution(probs, weights_);
}

std::array<EmotionDistribution, kNumPerspectives> EmotionEnsemble::perspective_distributions(const torch::Tensor& image) {
    torch::NoGradGuard no_grad;
    std::array<EmotionDistribution, kNumPerspectives> out;
    const auto batch = image.unsqueeze(0);
    for (auto p : kAllPerspectives) {
        const auto pr = probabilities(p, batch).to(torch::kDouble).squeeze(0).contiguous();
        std::array<double, kNumEmotions> v{};
        std::copy(pr.data_ptr<double>(), pr.data_ptr<double>() + kNumEmotions, v.begin());
        double s = 0.0;
        for (double x : v) s += x;
        for (double& x : v) x /= s;
        out[static_cast<std::size_t>(p)] = EmotionDistribution::from_probs(v);
    }
    return out;
}

EmotionDistribution EmotionEnsemble::distribution(const torch::Tensor& image) {
    const auto parts = perspective_distributions(image);
    return ensemble_distribution(parts, weights_);
}

std::vector<EmotionEstimator> EmotionEnsemble::estimators() {
    std::vector<EmotionEstimator> out;
    for (auto p : kAllPerspectives) {
        out.emplace_back([this, p](const torch::Tensor& image) {
            return perspective_distributions(image)[static_cast<std::size_t>(p)];
        });
    }
    return out;
}

void EmotionEnsemble::set_weights(EnsembleWeights w) {
    w.validate(kNumPerspectives);
    weights_ = std::move(w);
}

void EmotionEnsemble::archive(TensorArchive& archive, const std::string& prefix) const {
    archive_module(archive, *backbone_, prefix + "backbone.");
    for (auto p : kAllPerspectives) {
        archive_module(archive, *classifiers_[static_cast<std::size_t>(p)], prefix + std::string(perspective_name(p)) + ".");
    }
    archive.add(prefix + "weights", torch::tensor(weights_.w, torch::kDouble));
}

void EmotionEnsemble::restore(const TensorArchive& archive, const std::string& prefix) {
    restore_module(archive, *backbone_, prefix + "backbone.");
    for (auto p : kAllPerspectives) {
        restore_module(archive, *classifiers_[static_cast<std::size_t>(p)], prefix + std::string(perspective_name(p)) + ".");
    }
    const auto w = archive.get(prefix + "weights").contiguous();
    set_weights(EnsembleWeights{std::vector<double>(w.data_ptr<double>(), w.data_ptr<double>() + w.numel())});
}

void EmotionEnsemble::to(torch::Dtype dtype) {
    backbone_->to(dtype);
    for (auto& c : classifiers_) c->to(dtype);
}

void EmotionEnsemble::freeze() {
    for (auto& c : classifiers_) {
        for (auto& p : c->parameters()) p.set_requires_grad(false);
    }
}

EnsembleWeights fit_ensemble_weights(std::span<const EmotionEstimator> classifiers,
                                     const std::vector<torch::Tensor>& images, const std::vector<Emotion>& labels) {
    if (images.empty()) throw InvalidArgument("validation split is empty");
    if (images.size() != labels.size()) throw InvalidArgument("image and label counts differ");
    if (classifiers.empty()) throw InvalidArgument("no classifiers to weight");
    EnsembleWeights out;
    for (const auto& c : classifiers) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (c(images[i]).argmax() == labels[i]) ++correct;
        }
        out.w.push_back(static_cast<double>(correct) / static_cast<double>(images.size()));
    }
    return out;
}

}  // namespace aif
