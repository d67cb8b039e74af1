#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace aif {

/// Mikel's wheel categories. The enumerator value is the wheel position:
/// positive emotions occupy 0-3 and negative ones 4-7, so the opposite of
/// every category sits at +4 mod 8.
enum class Emotion : int {
    amusement = 0,
    awe = 1,
    contentment = 2,
    excitement = 3,
    anger = 4,
    disgust = 5,
    fear = 6,
    sadness = 7,
};

inline constexpr int kNumEmotions = 8;

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::amusement, Emotion::awe,     Emotion::contentment, Emotion::excitement,
    Emotion::anger,     Emotion::disgust, Emotion::fear,        Emotion::sadness,
};

constexpr int wheel_position(Emotion e) { return static_cast<int>(e); }
Emotion emotion_at(int position);

std::string_view emotion_name(Emotion e);
/// Parses a lowercase category name; throws InvalidArgument otherwise.
Emotion parse_emotion(std::string_view name);

constexpr bool is_positive(Emotion e) { return wheel_position(e) < 4; }

/// Minimum number of steps between two categories around the wheel, in [0, 4].
int wheel_distance(Emotion a, Emotion b);

/// Point on the 8-category probability simplex.
class EmotionDistribution {
public:
    /// Uniform distribution.
    EmotionDistribution();

    /// Validates non-negativity and unit sum (1e-9).
    static EmotionDistribution from_probs(std::span<const double> probs);
    static EmotionDistribution delta(Emotion e);
    static EmotionDistribution uniform() { return {}; }

    const std::array<double, kNumEmotions>& probs() const { return probs_; }
    double operator[](Emotion e) const { return probs_[wheel_position(e)]; }
    double operator[](int i) const { return probs_.at(static_cast<std::size_t>(i)); }

    /// Most probable category; ties resolve to the lowest wheel position.
    Emotion argmax() const;

    bool operator==(const EmotionDistribution&) const = default;

private:
    std::array<double, kNumEmotions> probs_;
};

/// Lower clamp applied to the estimate before taking logarithms.
inline constexpr double kKlEpsilon = 1e-8;

/// KL(target || estimate) = sum_i t_i ln(t_i / max(e_i, eps)), with 0 ln 0 = 0.
/// Throws MalformedDistribution when the lengths differ or are not 8.
double kl_divergence(std::span<const double> target, std::span<const double> estimate);
double kl_divergence(const EmotionDistribution& target, const EmotionDistribution& estimate);

/// Seed / positive / related / negative categories for the sentiment metric loss.
struct EmotionTuple {
    Emotion sed;
    Emotion pos;
    Emotion rel;
    Emotion neg;
};

/// pos = sed, rel = one of the two wheel neighbours (uniform), neg = opposite.
EmotionTuple sample_emotion_tuple(Emotion sed, std::mt19937_64& rng);

/// Annotation counts to a distribution. Throws InvalidArgument on all-zero counts.
EmotionDistribution normalize_counts(std::span<const std::int64_t> counts);

}  // namespace aif
