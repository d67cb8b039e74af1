#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aif/emotion.hpp"

namespace aif {

/// Directory holding the bundled lexicons. AIF_DATA_DIR in the environment
/// overrides the location baked in at build time.
std::filesystem::path default_data_dir();

/// Per-word valence / arousal / dominance scores, each in [0, 1].
struct VadTriple {
    double valence = 0.5;
    double arousal = 0.5;
    double dominance = 0.5;

    bool operator==(const VadTriple&) const = default;
};

inline constexpr VadTriple kNeutralVad{0.5, 0.5, 0.5};
inline constexpr int kVadChannels = 3;

/// `word<TAB>valence<TAB>arousal<TAB>dominance` records.
class VadLexicon {
public:
    static VadLexicon load(const std::filesystem::path& path);
    static VadLexicon parse(std::istream& in);

    /// Stored triple, or the neutral triple for unknown words.
    /// Throws InvalidArgument for an empty word.
    VadTriple lookup(std::string_view word) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, VadTriple> entries_;
};

inline VadTriple vad_lookup(std::string_view word, const VadLexicon& lexicon) { return lexicon.lookup(word); }

/// `word<TAB>category` records mapping emotional words onto the wheel.
class KeywordLexicon {
public:
    static KeywordLexicon load(const std::filesystem::path& path);
    static KeywordLexicon parse(std::istream& in);

    std::optional<Emotion> category(std::string_view word) const;
    /// Words of one category in file order.
    const std::vector<std::string>& words(Emotion e) const;
    std::size_t size() const { return index_.size(); }

private:
    std::unordered_map<std::string, Emotion> index_;
    std::array<std::vector<std::string>, kNumEmotions> by_category_;
};

/// Lowercased runs of [a-z0-9'].
std::vector<std::string> tokenize(std::string_view text);

/// Word-level vocabulary. Id 0 pads, id 1 stands for unknown words.
class Vocabulary {
public:
    static constexpr std::int64_t kPad = 0;
    static constexpr std::int64_t kUnknown = 1;

    Vocabulary();
    static Vocabulary build(const std::vector<std::string>& texts);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void add(const std::string& word);
    std::int64_t id(std::string_view word) const;
    const std::string& word(std::int64_t id) const { return words_.at(static_cast<std::size_t>(id)); }
    std::int64_t size() const { return static_cast<std::int64_t>(words_.size()); }

    /// Token ids truncated or padded to exactly `length` entries.
    std::vector<std::int64_t> encode(const std::vector<std::string>& tokens, std::int64_t length) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::int64_t> ids_;
};

/// Word tokens with their M x C_tex embedding rows.
struct TokenSequence {
    std::vector<std::string> tokens;
    torch::Tensor embeddings;

    /// Throws ShapeError unless M >= 1 and rows match tokens.
    void validate() const;
};

/// M x 3 matrix of lexicon scores, one row per token.
torch::Tensor vad_matrix(const std::vector<std::string>& tokens, const VadLexicon& lexicon);

/// Concatenates each embedding row with its token's VAD triple: M x (C_tex + 3).
torch::Tensor augment_tokens(const TokenSequence& text, const VadLexicon& lexicon);

/// Text-in / text-out completion call. Implementations may throw on failure.
class LanguageModelClient {
public:
    virtual ~LanguageModelClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

struct RichPrompt {
    std::string original;
    std::vector<std::string> keywords;
    std::string directive;
    std::string combined;
    bool fallback = false;

    bool operator==(const RichPrompt&) const = default;
};

/// Deterministic keyword-lexicon enhancement used without a language model.
RichPrompt offline_enhance(std::string_view description, const KeywordLexicon& lexicon);

/// Three sequential client calls: keyword extraction, directive, combination.
/// Any client error or empty answer falls back to offline_enhance with the
/// fallback flag set. Throws InvalidArgument for an empty description.
RichPrompt cot_enhance(std::string_view description, LanguageModelClient& client, const KeywordLexicon& lexicon);

/// Enhances with `client` when given, offline otherwise.
RichPrompt enhance_description(std::string_view description, LanguageModelClient* client,
                               const KeywordLexicon& lexicon);

}  // namespace aif
