#include "aif/text_encoder.hpp"

#include "aif/errors.hpp"

namespace aif {

TextBatch TextBatch::index(const torch::Tensor& rows) const {
    return {ids.index_select(0, rows), vad.index_select(0, rows), mask.index_select(0, rows)};
}

TextBatch make_text_batch(const std::vector<std::string>& texts, const Vocabulary& vocab, const VadLexicon& lexicon,
                          std::int64_t max_len) {
    if (texts.empty()) throw InvalidArgument("no texts to encode");
    if (max_len < 1) throw InvalidArgument("text length must be positive");
    const auto batch = static_cast<std::int64_t>(texts.size());
    auto ids = torch::full({batch, max_len}, Vocabulary::kPad, torch::kLong);
    auto vad = torch::full({batch, max_len, kVadChannels}, 0.5, torch::kFloat);
    auto mask = torch::zeros({batch, max_len}, torch::kBool);
    auto id_acc = ids.accessor<std::int64_t, 2>();
    auto vad_acc = vad.accessor<float, 3>();
    auto mask_acc = mask.accessor<bool, 2>();
    for (std::int64_t b = 0; b < batch; ++b) {
        const auto& text = texts[static_cast<std::size_t>(b)];
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidArgument("text is empty");
        auto tokens = tokenize(text);
        if (tokens.empty()) tokens.emplace_back("<unk>");
        const auto n = std::min<std::int64_t>(max_len, static_cast<std::int64_t>(tokens.size()));
        const auto encoded = vocab.encode(tokens, max_len);
        for (std::int64_t m = 0; m < n; ++m) {
            id_acc[b][m] = encoded[static_cast<std::size_t>(m)];
            const auto v = lexicon.lookup(tokens[static_cast<std::size_t>(m)]);
            vad_acc[b][m][0] = static_cast<float>(v.valence);
            vad_acc[b][m][1] = static_cast<float>(v.arousal);
            vad_acc[b][m][2] = static_cast<float>(v.dominance);
            mask_acc[b][m] = true;
        }
    }
    return {ids, vad, mask};
}

TextEncoderImpl::TextEncoderImpl(std::int64_t vocab_size, std::int64_t dim, std::int64_t max_len)
    : dim_(dim), max_len_(max_len) {
    embedding_ = register_module("embedding", torch::nn::Embedding(vocab_size, dim));
    position_ = register_parameter("position", torch::randn({max_len, dim}) * 0.02);
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& ids) {
    if (ids.dim() != 2 || ids.size(1) > max_len_) throw ShapeError("text ids must be [B,M] with M <= max_len");
    return embedding_->forward(ids) + position_.slice(0, 0, ids.size(1)).unsqueeze(0);
}

torch::Tensor TextEncoderImpl::augmented(const TextBatch& text) {
    return torch::cat({forward(text.ids), text.vad.to(position_.scalar_type())}, 2);
}

torch::Tensor masked_mean(const torch::Tensor& tokens, const torch::Tensor& mask) {
    const auto m = mask.to(tokens.scalar_type()).unsqueeze(2);
    return (tokens * m).sum(1) / m.sum(1).clamp_min(1.0);
}

}  // namespace aif
