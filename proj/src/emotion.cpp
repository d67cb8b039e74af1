#include "aif/emotion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "aif/errors.hpp"

namespace aif {

namespace {

constexpr std::array<std::string_view, kNumEmotions> kNames = {
    "amusement", "awe", "contentment", "excitement", "anger", "disgust", "fear", "sadness",
};

void check_length(std::size_t n, const char* what) {
    if (n != kNumEmotions) {
        throw MalformedDistribution(std::string(what) + " has " + std::to_string(n) +
                                    " entries, expected " + std::to_string(kNumEmotions));
    }
}

}  // namespace

Emotion emotion_at(int position) {
    if (position < 0 || position >= kNumEmotions) {
        throw InvalidArgument("wheel position out of range: " + std::to_string(position));
    }
    return static_cast<Emotion>(position);
}

std::string_view emotion_name(Emotion e) { return kNames[static_cast<std::size_t>(wheel_position(e))]; }

Emotion parse_emotion(std::string_view name) {
    for (int i = 0; i < kNumEmotions; ++i) {
        if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<Emotion>(i);
    }
    throw InvalidArgument("unknown emotion category '" + std::string(name) + "'");
}

int wheel_distance(Emotion a, Emotion b) {
    const int d = std::abs(wheel_position(a) - wheel_position(b));
    return std::min(d, kNumEmotions - d);
}

EmotionDistribution::EmotionDistribution() { probs_.fill(1.0 / kNumEmotions); }

EmotionDistribution EmotionDistribution::from_probs(std::span<const double> probs) {
    check_length(probs.size(), "distribution");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw MalformedDistribution("distribution entry is negative or non-finite");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw MalformedDistribution("distribution sums to " + std::to_string(sum));
    }
    EmotionDistribution d;
    std::copy(probs.begin(), probs.end(), d.probs_.begin());
    return d;
}

EmotionDistribution EmotionDistribution::delta(Emotion e) {
    EmotionDistribution d;
    d.probs_.fill(0.0);
    d.probs_[static_cast<std::size_t>(wheel_position(e))] = 1.0;
    return d;
}

Emotion EmotionDistribution::argmax() const {
    // max_element returns the first maximum, which is the lowest position.
    const auto it = std::max_element(probs_.begin(), probs_.end());
    return static_cast<Emotion>(std::distance(probs_.begin(), it));
}

double kl_divergence(std::span<const double> target, std::span<const double> estimate) {
    check_length(target.size(), "target");
    check_length(estimate.size(), "estimate");
    double kl = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double t = target[i];
        if (t <= 0.0) continue;
        kl += t * std::log(t / std::max(estimate[i], kKlEpsilon));
    }
    // Rounding can leave a tiny negative value for identical inputs.
    return std::max(kl, 0.0);
}

double kl_divergence(const EmotionDistribution& target, const EmotionDistribution& estimate) {
    return kl_divergence(std::span<const double>(target.probs()), std::span<const double>(estimate.probs()));
}

EmotionTuple sample_emotion_tuple(Emotion sed, std::mt19937_64& rng) {
    const int p = wheel_position(sed);
    const int step = (rng() & 1u) ? 1 : kNumEmotions - 1;
    return EmotionTuple{
        .sed = sed,
        .pos = sed,
        .rel = static_cast<Emotion>((p + step) % kNumEmotions),
        .neg = static_cast<Emotion>((p + kNumEmotions / 2) % kNumEmotions),
    };
}

EmotionDistribution normalize_counts(std::span<const std::int64_t> counts) {
    if (counts.size() != kNumEmotions) {
        throw InvalidArgument("expected 8 annotation counts, got " + std::to_string(counts.size()));
    }
    std::int64_t total = 0;
    for (auto c : counts) {
        if (c < 0) throw InvalidArgument("annotation counts must be non-negative");
        total += c;
    }
    if (total == 0) throw InvalidArgument("annotation counts are all zero");
    std::array<double, kNumEmotions> probs{};
    for (std::size_t i = 0; i < counts.size(); ++i) {
        probs[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    }
    return EmotionDistribution::from_probs(probs);
}

}  // namespace aif
