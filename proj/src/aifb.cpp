#include "aif/aifb.hpp"

#include <cmath>

#include "aif/errors.hpp"

namespace aif {

namespace {

bool power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

torch::nn::Sequential mlp(std::int64_t in, std::int64_t hidden, std::int64_t out) {
    return torch::nn::Sequential(torch::nn::Linear(in, hidden), torch::nn::GELU(), torch::nn::Linear(hidden, out));
}

// Splits log2(patch) doublings over the three decoder layers, earliest first.
std::array<double, 3> upsample_factors(std::int64_t patch) {
    int k = 0;
    while ((std::int64_t{1} << k) < patch) ++k;
    std::array<int, 3> d{k / 3, k / 3, k / 3};
    for (int i = 0; i < k % 3; ++i) ++d[static_cast<std::size_t>(i)];
    return {std::ldexp(1.0, d[0]), std::ldexp(1.0, d[1]), std::ldexp(1.0, d[2])};
}

torch::nn::Upsample upsample(double factor) {
    return torch::nn::Upsample(torch::nn::UpsampleOptions()
                                   .scale_factor(std::vector<double>{factor, factor})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

}  // namespace

void AifbConfig::validate() const {
    if (patch <= 0 || !power_of_two(patch)) throw ConfigError("patch size must be a power of two");
    if (resolution <= 0 || resolution % patch != 0) {
        throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by patch " +
                          std::to_string(patch));
    }
    if (heads <= 0 || width <= 0 || width % heads != 0) throw ConfigError("width must be divisible by the head count");
    if (width % 4 != 0) throw ConfigError("width must be divisible by 4");
    if (layers < 0) throw ConfigError("layer count must be non-negative");
    if (max_text <= 0 || text_dim <= 0) throw ConfigError("text length and width must be positive");
    if (vocab_size <= 0) throw ConfigError("vocabulary size must be positive");
}

ModalTypeEmbeddingImpl::ModalTypeEmbeddingImpl(std::int64_t width) {
    image_type = register_parameter("image_type", torch::randn({width}) * 0.02);
    text_type = register_parameter("text_type", torch::randn({width}) * 0.02);
}

torch::Tensor fuse_tokens(const torch::Tensor& image_tokens, const torch::Tensor& text_tokens,
                          const torch::Tensor& image_type, const torch::Tensor& text_type) {
    if (image_tokens.dim() != 3 || text_tokens.dim() != 3) throw ShapeError("tokens must be [B,S,C]");
    const auto c = image_tokens.size(2);
    if (text_tokens.size(2) != c || image_type.numel() != c || text_type.numel() != c) {
        throw ShapeError("image tokens, text tokens and type embeddings must share one width");
    }
    if (text_tokens.size(0) != image_tokens.size(0)) throw ShapeError("image and text batch sizes differ");
    return torch::cat({image_tokens + image_type.reshape({1, 1, c}), text_tokens + text_type.reshape({1, 1, c})}, 1);
}

SelfAttentionImpl::SelfAttentionImpl(std::int64_t width, std::int64_t heads) : heads_(heads) {
    if (width % heads != 0) throw ConfigError("width must be divisible by the head count");
    qkv_ = register_module("qkv", torch::nn::Linear(width, 3 * width));
    out_ = register_module("out", torch::nn::Linear(width, width));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& key_mask,
                                         torch::Tensor* attention) {
    const auto b = x.size(0), s = x.size(1), c = x.size(2);
    const auto d = c / heads_;
    auto qkv = qkv_->forward(x).reshape({b, s, 3, heads_, d}).permute({2, 0, 3, 1, 4});
    auto scores = torch::matmul(qkv[0], qkv[1].transpose(-2, -1)) / std::sqrt(static_cast<double>(d));
    if (key_mask.defined()) {
        if (key_mask.sizes() != torch::IntArrayRef{b, s}) throw ShapeError("key mask must be [B,S]");
        scores = scores.masked_fill(key_mask.logical_not().reshape({b, 1, 1, s}),
                                    -std::numeric_limits<float>::infinity());
    }
    const auto weights = torch::softmax(scores, -1);
    if (attention) *attention = weights;
    const auto mixed = torch::matmul(weights, qkv[2]).transpose(1, 2).reshape({b, s, c});
    return out_->forward(mixed);
}

TransformerBlockImpl::TransformerBlockImpl(std::int64_t width, std::int64_t heads) {
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    attention_ = register_module("attention", SelfAttention(width, heads));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    mlp_ = register_module("mlp", mlp(width, 4 * width, width));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& key_mask,
                                            torch::Tensor* attention) {
    const auto z = attention_->forward(norm1_->forward(x), key_mask, attention) + x;
    return mlp_->forward(norm2_->forward(z)) + z;
}

torch::Tensor transformer_forward(const torch::Tensor& z0, std::vector<TransformerBlock>& blocks,
                                  const torch::Tensor& key_mask, std::vector<torch::Tensor>* attention) {
    auto z = z0;
    if (attention) attention->clear();
    for (auto& block : blocks) {
        torch::Tensor a;
        z = block->forward(z, key_mask, attention ? &a : nullptr);
        if (attention) attention->push_back(a);
    }
    return z;
}

AifbGeneratorImpl::AifbGeneratorImpl(AifbConfig config) : config_(config) {
    config_.validate();
    const auto w = config_.width;
    const auto n = config_.tokens_per_side() * config_.tokens_per_side();
    patch_embed_ = register_module(
        "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, w, config_.patch).stride(config_.patch)));
    position_ = register_parameter("position", torch::randn({1, n, w}) * 0.02);
    image_proj_ = register_module("image_proj", mlp(w, w, w));
    text_encoder_ = register_module("text_encoder", TextEncoder(config_.vocab_size, config_.text_dim, config_.max_text));
    text_proj_ = register_module("text_proj", mlp(config_.text_dim + 3, w, w));
    types_ = register_module("types", ModalTypeEmbedding(w));
    for (std::int64_t i = 0; i < config_.layers; ++i) {
        blocks_.push_back(register_module("block" + std::to_string(i), TransformerBlock(w, config_.heads)));
    }
    final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));

    const auto f = upsample_factors(config_.patch);
    auto conv = [](std::int64_t in, std::int64_t out) {
        return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
    };
    decoder_ = register_module("decoder", torch::nn::Sequential(upsample(f[0]), conv(w, w / 2), torch::nn::GELU(),
                                                                upsample(f[1]), conv(w / 2, w / 4), torch::nn::GELU(),
                                                                upsample(f[2]), conv(w / 4, 3), torch::nn::Sigmoid()));
}

torch::Tensor AifbGeneratorImpl::encode_image_patches(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != config_.resolution ||
        images.size(3) != config_.resolution) {
        throw ShapeError("generator expects [B,3," + std::to_string(config_.resolution) + "," +
                         std::to_string(config_.resolution) + "] images");
    }
    auto tokens = patch_embed_->forward(images).flatten(2).transpose(1, 2);
    if (config_.position_encoding) tokens = tokens + position_;
    return tokens;
}

torch::Tensor AifbGeneratorImpl::encode_text(const TextBatch& text) {
    return text_proj_->forward(text_encoder_->augmented(text));
}

torch::Tensor AifbGeneratorImpl::decode_image(const torch::Tensor& zl) {
    const auto side = config_.tokens_per_side();
    const auto n = side * side;
    if (zl.dim() != 3 || zl.size(1) < n || zl.size(2) != config_.width) throw ShapeError("Z_L has the wrong shape");
    const auto grid = zl.slice(1, 0, n).transpose(1, 2).reshape({zl.size(0), config_.width, side, side});
    return decoder_->forward(grid);
}

torch::Tensor AifbGeneratorImpl::forward(const torch::Tensor& content, const TextBatch& text,
                                         std::vector<torch::Tensor>* attention) {
    if (text.size() != content.size(0)) throw ShapeError("content and text batch sizes differ");
    const auto img = image_proj_->forward(encode_image_patches(content));
    const auto emo = encode_text(text);
    const auto z0 = fuse_tokens(img, emo, types_->image_type, types_->text_type);
    const auto image_mask = torch::ones({content.size(0), img.size(1)}, torch::kBool);
    const auto mask = torch::cat({image_mask, text.mask}, 1);
    return decode_image(final_norm_->forward(transformer_forward(z0, blocks_, mask, attention)));
}

AifbDiscriminatorImpl::AifbDiscriminatorImpl(std::int64_t text_width, std::int64_t base_channels) {
    auto down = [](std::int64_t in, std::int64_t out) {
        return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
    };
    auto act = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
    const auto c = base_channels;
    trunk_ = register_module("trunk", torch::nn::Sequential(down(3, c), act(), down(c, 2 * c), act(),
                                                            down(2 * c, 4 * c), act(), down(4 * c, 4 * c), act()));
    uncond_head_ = register_module("uncond_head", torch::nn::Linear(4 * c, 1));
    text_proj_ = register_module("text_proj", torch::nn::Linear(text_width, 4 * c));
    cond_head_ = register_module("cond_head", torch::nn::Linear(8 * c, 1));
}

DiscriminatorScores AifbDiscriminatorImpl::forward(const torch::Tensor& images, const torch::Tensor& pooled_text) {
    if (pooled_text.dim() != 2 || pooled_text.size(0) != images.size(0)) {
        throw ShapeError("pooled text must be [B,C] with the image batch size");
    }
    const auto h = trunk_->forward(images).mean({2, 3});
    const auto t = torch::leaky_relu(text_proj_->forward(pooled_text), 0.2);
    return {torch::sigmoid(uncond_head_->forward(h)).squeeze(1),
            torch::sigmoid(cond_head_->forward(torch::cat({h, t}, 1))).squeeze(1)};
}

}  // namespace aif
