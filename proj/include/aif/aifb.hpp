#pragma once

#include <torch/torch.h>

#include <vector>

#include "aif/text_encoder.hpp"

namespace aif {

struct AifbConfig {
    std::int64_t patch = 8;
    std::int64_t layers = 4;
    std::int64_t width = 128;  ///< C0, shared by image and text tokens
    std::int64_t heads = 4;
    std::int64_t resolution = 64;
    std::int64_t max_text = 24;
    std::int64_t text_dim = 64;
    std::int64_t vocab_size = 0;
    /// Learned absolute positions on image tokens; off only in probes.
    bool position_encoding = true;

    /// Throws ConfigError on width % heads != 0, resolution % patch != 0 or
    /// a patch size that is not a power of two.
    void validate() const;
    std::int64_t tokens_per_side() const { return resolution / patch; }
};

/// Two learned token-type vectors: index 0 for image tokens, 1 for text.
class ModalTypeEmbeddingImpl : public torch::nn::Module {
public:
    explicit ModalTypeEmbeddingImpl(std::int64_t width);
    torch::Tensor image_type;
    torch::Tensor text_type;
};
TORCH_MODULE(ModalTypeEmbedding);

/// [img + typ0 ; emo + typ1] along the token axis, image tokens first.
torch::Tensor fuse_tokens(const torch::Tensor& image_tokens, const torch::Tensor& text_tokens,
                          const torch::Tensor& image_type, const torch::Tensor& text_type);

/// Multi-head self-attention that can hand back its attention weights.
class SelfAttentionImpl : public torch::nn::Module {
public:
    SelfAttentionImpl(std::int64_t width, std::int64_t heads);

    /// x [B,S,C]; key_mask [B,S] bool with true on attendable tokens (may be
    /// undefined). When `attention` is given it receives [B,heads,S,S].
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_mask = {},
                          torch::Tensor* attention = nullptr);

private:
    std::int64_t heads_;
    torch::nn::Linear qkv_{nullptr};
    torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(SelfAttention);

/// Pre-norm block: z + MSA(LN(z)), then z + MLP(LN(z)).
class TransformerBlockImpl : public torch::nn::Module {
public:
    TransformerBlockImpl(std::int64_t width, std::int64_t heads);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_mask = {},
                          torch::Tensor* attention = nullptr);

private:
    torch::nn::LayerNorm norm1_{nullptr};
    SelfAttention attention_{nullptr};
    torch::nn::LayerNorm norm2_{nullptr};
    torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// Applies the blocks in order; with no blocks the input comes back unchanged.
torch::Tensor transformer_forward(const torch::Tensor& z0, std::vector<TransformerBlock>& blocks,
                                  const torch::Tensor& key_mask = {}, std::vector<torch::Tensor>* attention = nullptr);

class AifbGeneratorImpl : public torch::nn::Module {
public:
    explicit AifbGeneratorImpl(AifbConfig config);

    /// [B,3,H,W] -> [B,N,width] patch tokens in row-major patch order.
    torch::Tensor encode_image_patches(const torch::Tensor& images);
    /// Projected text tokens with VAD scores appended before projection: [B,M,width].
    torch::Tensor encode_text(const TextBatch& text);
    /// Image-token slice of Z_L -> [B,3,H,W] in [0,1].
    torch::Tensor decode_image(const torch::Tensor& zl);

    torch::Tensor forward(const torch::Tensor& content, const TextBatch& text,
                          std::vector<torch::Tensor>* attention = nullptr);

    const AifbConfig& config() const { return config_; }
    TextEncoder& text_encoder() { return text_encoder_; }
    ModalTypeEmbedding& type_embedding() { return types_; }
    std::vector<TransformerBlock>& blocks() { return blocks_; }

private:
    AifbConfig config_;
    torch::nn::Conv2d patch_embed_{nullptr};
    torch::Tensor position_;
    torch::nn::Sequential image_proj_{nullptr};
    TextEncoder text_encoder_{nullptr};
    torch::nn::Sequential text_proj_{nullptr};
    ModalTypeEmbedding types_{nullptr};
    std::vector<TransformerBlock> blocks_;
    torch::nn::LayerNorm final_norm_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(AifbGenerator);

/// Probabilities from both heads of the discriminator.
struct DiscriminatorScores {
    torch::Tensor uncond;  ///< [B]
    torch::Tensor cond;    ///< [B]
};

/// Four strided convolutions, then an unconditional head and a head that also
/// sees a pooled text embedding.
class AifbDiscriminatorImpl : public torch::nn::Module {
public:
    AifbDiscriminatorImpl(std::int64_t text_width, std::int64_t base_channels = 32);
    /// images [B,3,H,W], pooled_text [B,text_width].
    DiscriminatorScores forward(const torch::Tensor& images, const torch::Tensor& pooled_text);

private:
    torch::nn::Sequential trunk_{nullptr};
    torch::nn::Linear uncond_head_{nullptr};
    torch::nn::Linear text_proj_{nullptr};
    torch::nn::Linear cond_head_{nullptr};
};
TORCH_MODULE(AifbDiscriminator);

}  // namespace aif
