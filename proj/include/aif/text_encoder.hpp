#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "aif/affective_text.hpp"

namespace aif {

/// Padded token ids plus per-token lexicon scores for a batch of texts.
struct TextBatch {
    torch::Tensor ids;   ///< [B,M] int64, Vocabulary::kPad after the text
    torch::Tensor vad;   ///< [B,M,3] float
    torch::Tensor mask;  ///< [B,M] bool, true on real tokens

    std::int64_t size() const { return ids.size(0); }
    TextBatch index(const torch::Tensor& rows) const;
};

/// Tokenizes, truncates to `max_len` and pads. A text without any word token
/// becomes a single unknown token. Throws InvalidArgument for empty text.
TextBatch make_text_batch(const std::vector<std::string>& texts, const Vocabulary& vocab, const VadLexicon& lexicon,
                          std::int64_t max_len);

/// Trained-from-scratch word embeddings with learned positions.
class TextEncoderImpl : public torch::nn::Module {
public:
    TextEncoderImpl(std::int64_t vocab_size, std::int64_t dim, std::int64_t max_len);

    /// [B,M] ids -> [B,M,dim].
    torch::Tensor forward(const torch::Tensor& ids);

    /// Embeddings with each token's VAD triple appended: [B,M,dim+3].
    torch::Tensor augmented(const TextBatch& text);

    std::int64_t dim() const { return dim_; }
    std::int64_t max_len() const { return max_len_; }

private:
    std::int64_t dim_;
    std::int64_t max_len_;
    torch::nn::Embedding embedding_{nullptr};
    torch::Tensor position_;
};
TORCH_MODULE(TextEncoder);

/// Mean over real tokens of [B,M,C] features: [B,C].
torch::Tensor masked_mean(const torch::Tensor& tokens, const torch::Tensor& mask);

}  // namespace aif
