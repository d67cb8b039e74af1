#include "aif/features.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "aif/errors.hpp"

namespace aif {

namespace {

torch::Tensor as_batch(const torch::Tensor& x, std::int64_t expected_dim) {
    if (x.dim() == expected_dim - 1) return x.unsqueeze(0);
    if (x.dim() == expected_dim) return x;
    throw ShapeError("expected a " + std::to_string(expected_dim - 1) + "-D or " + std::to_string(expected_dim) +
                     "-D tensor, got " + std::to_string(x.dim()) + "-D");
}

void seeded_normal_(torch::Tensor& w, double stddev, at::Generator& gen) {
    torch::NoGradGuard no_grad;
    w.copy_(torch::randn(w.sizes(), gen, w.options()) * stddev);
}

}  // namespace

FeatureBackboneImpl::FeatureBackboneImpl(BackboneConfig config) : config_(std::move(config)) {
    if (config_.channels.size() != config_.strides.size() || config_.channels.size() < 2) {
        throw ConfigError("backbone needs >= 2 stages with one stride per stage");
    }
    auto gen = at::make_generator<at::CPUGeneratorImpl>(config_.seed);
    std::int64_t in = 3;
    for (std::size_t i = 0; i < config_.channels.size(); ++i) {
        const auto out = config_.channels[i];
        auto conv = torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in, out, 3).stride(config_.strides[i]).padding(1).bias(config_.bias));
        seeded_normal_(conv->weight, std::sqrt(2.0 / static_cast<double>(in * 9)), gen);
        if (config_.bias) {
            torch::NoGradGuard no_grad;
            conv->bias.zero_();
        }
        stages_.push_back(register_module("stage" + std::to_string(i), conv));
        in = out;
    }
    for (auto& p : parameters()) p.set_requires_grad(false);
}

std::int64_t FeatureBackboneImpl::channels(std::int64_t level) const {
    return config_.channels.at(static_cast<std::size_t>(level));
}

std::int64_t FeatureBackboneImpl::total_stride() const {
    std::int64_t s = 1;
    for (auto v : config_.strides) s *= v;
    return s;
}

std::vector<torch::Tensor> FeatureBackboneImpl::forward(const torch::Tensor& images) {
    const bool single = images.dim() == 3;
    auto x = as_batch(images, 4);
    if (x.size(1) != 3) throw ShapeError("backbone expects 3-channel images");
    const auto stride = total_stride();
    if (x.size(2) % stride != 0 || x.size(3) % stride != 0) {
        throw ShapeError("image size " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                         " must be a multiple of " + std::to_string(stride));
    }
    std::vector<torch::Tensor> out;
    out.reserve(stages_.size());
    for (auto& conv : stages_) {
        x = torch::relu(conv(x));
        out.push_back(single ? x.squeeze(0) : x);
    }
    return out;
}

FeaturePyramid extract_feature_pyramid(const torch::Tensor& image, FeatureBackbone& backbone) {
    return FeaturePyramid{backbone->forward(image)};
}

torch::Tensor gram_matrix(const torch::Tensor& feature) {
    const bool single = feature.dim() == 3;
    const auto f = as_batch(feature, 4);
    const auto hw = f.size(2) * f.size(3);
    if (hw < 1) throw ShapeError("gram matrix of an empty feature map");
    const auto flat = f.reshape({f.size(0), f.size(1), hw});
    auto g = torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(hw);
    return single ? g.squeeze(0) : g;
}

SentimentExtractorImpl::SentimentExtractorImpl(FeatureBackbone backbone, SentimentConfig config)
    : config_(config), backbone_(std::move(backbone)) {
    register_module("backbone", backbone_);
    const auto k = config_.projection_channels;
    const auto upper = k * (k + 1) / 2;
    if (config_.n_gram < 1 || config_.n_gram > upper) {
        throw ConfigError("n_gram = " + std::to_string(config_.n_gram) + " exceeds the " + std::to_string(upper) +
                          " upper-triangular Gram elements per level");
    }
    auto gen = at::make_generator<at::CPUGeneratorImpl>(config_.seed);
    for (std::int64_t i = 0; i < backbone_->levels(); ++i) {
        const auto c = backbone_->channels(i);
        auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(c, k, 1).bias(false));
        seeded_normal_(conv->weight, std::sqrt(1.0 / static_cast<double>(c)), gen);
        conv->weight.set_requires_grad(false);
        projections_.push_back(register_module("proj" + std::to_string(i), conv));
    }
    std::vector<std::int64_t> rows;
    std::vector<std::int64_t> cols;
    for (std::int64_t r = 0; r < k && static_cast<std::int64_t>(rows.size()) < config_.n_gram; ++r) {
        for (std::int64_t c = r; c < k && static_cast<std::int64_t>(rows.size()) < config_.n_gram; ++c) {
            rows.push_back(r);
            cols.push_back(c);
        }
    }
    rows_ = register_buffer("rows", torch::tensor(rows, torch::kLong));
    cols_ = register_buffer("cols", torch::tensor(cols, torch::kLong));
}

std::int64_t SentimentExtractorImpl::dimension() const { return config_.n_gram * backbone_->levels(); }

torch::Tensor SentimentExtractorImpl::forward(const torch::Tensor& images) {
    const bool single = images.dim() == 3;
    const auto levels = backbone_->forward(as_batch(images, 4));
    const auto k = config_.projection_channels;
    const auto flat_index = rows_ * k + cols_;
    std::vector<torch::Tensor> parts;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto g = gram_matrix(projections_[i](levels[i]));
        parts.push_back(g.reshape({g.size(0), k * k}).index_select(1, flat_index));
    }
    auto v = torch::cat(parts, 1);
    return single ? v.squeeze(0) : v;
}

torch::Tensor sentiment_vector(const torch::Tensor& image, SentimentExtractor& extractor) {
    return extractor->forward(image);
}

namespace {

void check_unit_image(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a [3,H,W] image");
    if (image.numel() == 0) throw ShapeError("empty image");
    const auto lo = image.min().item<double>();
    const auto hi = image.max().item<double>();
    if (lo < 0.0 || hi > 1.0) throw InvalidArgument("image values must lie in [0,1]");
}

}  // namespace

torch::Tensor color_histogram(const torch::Tensor& image, std::int64_t bins) {
    if (bins < 2) throw InvalidArgument("histogram needs at least 2 bins");
    check_unit_image(image);
    const auto x = image.detach().to(torch::kDouble);
    const auto idx = (x * static_cast<double>(bins)).floor().clamp(0, bins - 1).to(torch::kLong);
    std::vector<torch::Tensor> parts;
    for (int c = 0; c < 3; ++c) {
        auto h = torch::bincount(idx[c].flatten(), {}, bins).to(torch::kDouble);
        parts.push_back(h / h.sum());
    }
    return torch::cat(parts);
}

torch::Tensor quantize_gray(const torch::Tensor& image, std::int64_t levels) {
    check_unit_image(image);
    const auto x = image.detach().to(torch::kDouble);
    const auto gray = 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2];
    return (gray * static_cast<double>(levels)).floor().clamp(0, levels - 1).to(torch::kLong);
}

torch::Tensor glcm_matrix(const torch::Tensor& image, std::pair<std::int64_t, std::int64_t> offset,
                          std::int64_t levels) {
    if (levels < 2) throw InvalidArgument("GLCM needs at least 2 gray levels");
    const auto [dy, dx] = offset;
    const auto q = quantize_gray(image, levels);
    const auto h = q.size(0);
    const auto w = q.size(1);
    if (std::abs(dy) >= h || std::abs(dx) >= w) {
        throw InvalidArgument("image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than offset (" +
                              std::to_string(dy) + "," + std::to_string(dx) + ")");
    }
    using torch::indexing::Slice;
    const auto y0 = std::max<std::int64_t>(0, -dy);
    const auto y1 = h - std::max<std::int64_t>(0, dy);
    const auto x0 = std::max<std::int64_t>(0, -dx);
    const auto x1 = w - std::max<std::int64_t>(0, dx);
    const auto a = q.index({Slice(y0, y1), Slice(x0, x1)});
    const auto b = q.index({Slice(y0 + dy, y1 + dy), Slice(x0 + dx, x1 + dx)});
    auto m = torch::bincount((a * levels + b).flatten(), {}, levels * levels)
                 .to(torch::kDouble)
                 .reshape({levels, levels});
    m = m + m.t();
    return m / m.sum();
}

torch::Tensor glcm_features(const torch::Tensor& image, const GlcmConfig& config) {
    if (config.levels < 2) throw InvalidArgument("GLCM needs at least 2 gray levels");
    if (config.offsets.empty()) throw InvalidArgument("GLCM needs at least one offset");
    const auto n = config.levels;
    const auto i = torch::arange(n, torch::kDouble).unsqueeze(1).expand({n, n});
    const auto j = torch::arange(n, torch::kDouble).unsqueeze(0).expand({n, n});
    const auto diff2 = (i - j).pow(2);
    std::vector<double> out;
    for (const auto& off : config.offsets) {
        const auto p = glcm_matrix(image, off, n);
        const double contrast = (p * diff2).sum().item<double>();
        const double energy = p.pow(2).sum().item<double>();
        const double homogeneity = (p / (1.0 + diff2)).sum().item<double>();
        const double mu_i = (p * i).sum().item<double>();
        const double mu_j = (p * j).sum().item<double>();
        const double var_i = (p * (i - mu_i).pow(2)).sum().item<double>();
        const double var_j = (p * (j - mu_j).pow(2)).sum().item<double>();
        const double denom = std::sqrt(var_i * var_j);
        const double correlation = denom < 1e-15 ? 1.0 : (p * (i - mu_i) * (j - mu_j)).sum().item<double>() / denom;
        out.insert(out.end(), {contrast, energy, homogeneity, correlation});
    }
    return torch::tensor(out, torch::kDouble);
}

std::vector<std::pair<std::int64_t, std::int64_t>> sample_patch_origins(std::int64_t height, std::int64_t width,
                                                                        const PatchConfig& config,
                                                                        std::mt19937_64& rng) {
    if (config.count < 1) throw InvalidArgument("patch count must be >= 1");
    if (config.size < 1 || config.size > std::min(height, width)) {
        throw InvalidArgument("patch size " + std::to_string(config.size) + " exceeds image size " +
                              std::to_string(height) + "x" + std::to_string(width));
    }
    std::vector<std::pair<std::int64_t, std::int64_t>> origins;
    const auto ny = static_cast<std::uint64_t>(height - config.size + 1);
    const auto nx = static_cast<std::uint64_t>(width - config.size + 1);
    for (std::int64_t k = 0; k < config.count; ++k) {
        const auto y = static_cast<std::int64_t>(rng() % ny);
        const auto x = static_cast<std::int64_t>(rng() % nx);
        origins.emplace_back(y, x);
    }
    return origins;
}

torch::Tensor patch_features(const torch::Tensor& image, std::mt19937_64& rng, const PatchConfig& config,
                             FeatureBackbone& backbone) {
    if (image.dim() != 3) throw ShapeError("patch_features expects a [3,H,W] image");
    using torch::indexing::Slice;
    const auto origins = sample_patch_origins(image.size(1), image.size(2), config, rng);
    std::vector<torch::Tensor> crops;
    for (const auto& [y, x] : origins) {
        crops.push_back(image.index({Slice(), Slice(y, y + config.size), Slice(x, x + config.size)}));
    }
    const auto levels = backbone->forward(torch::stack(crops));
    return levels.back().mean({2, 3});
}

torch::Tensor style_statistics(const FeaturePyramid& pyramid) {
    std::vector<torch::Tensor> parts;
    for (const auto& level : pyramid.levels) {
        const auto f = as_batch(level, 4);
        const auto flat = f.flatten(2);
        parts.push_back(flat.mean(2));
        parts.push_back((flat.var(2, /*unbiased=*/false) + 1e-8).sqrt());
    }
    return torch::cat(parts, 1);
}

}  // namespace aif
