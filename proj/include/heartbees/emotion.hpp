#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "heartbees/flock.hpp"

namespace heartbees {

// Canonical order; used for tie-breaking everywhere.
enum class Emotion { Joy, Sadness, Fear, Anger, Trust, Disgust, Surprise, Anticipation };

inline constexpr std::array<Emotion, 8> kAllEmotions{Emotion::Joy,   Emotion::Sadness, Emotion::Fear,
                                                     Emotion::Anger, Emotion::Trust,   Emotion::Disgust,
                                                     Emotion::Surprise, Emotion::Anticipation};

inline constexpr std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }

inline constexpr std::string_view name_of(Emotion e) {
    constexpr std::array<std::string_view, 8> names{"joy",   "sadness", "fear",     "anger",
                                                    "trust", "disgust", "surprise", "anticipation"};
    return names[index_of(e)];
}

class UnknownEmotion : public std::invalid_argument {
public:
    explicit UnknownEmotion(std::string_view name)
        : std::invalid_argument("unknown emotion '" + std::string(name) +
                                "'; expected one of: joy, sadness, fear, anger, trust, disgust, surprise, anticipation") {}
};

inline Emotion parse_emotion(std::string_view name) {
    std::string folded(name);
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (Emotion e : kAllEmotions)
        if (name_of(e) == folded) return e;
    throw UnknownEmotion(name);
}

// Motion coefficients per emotion: S, M, K, R, r, V.
struct MotionRow {
    double separation, alignment, cohesion, perception_range, separation_range, max_speed;
};

inline constexpr std::array<MotionRow, 8> kMotionTable{{
    {0.05, 0.05, 0.05, 60, 30, 2},   // joy
    {0.05, 0.05, 0.05, 0, 30, 1},    // sadness
    {0.1, 0.05, 0.05, 60, 30, 1},    // fear
    {0.01, 0.1, 0.1, 0, 0, 10},      // anger
    {0.05, 0.1, 0.05, 60, 30, 2},    // trust
    {0.1, 0.05, 0.1, 60, 60, 5},     // disgust
    {0.05, 0.05, 0.1, 60, 60, 5},    // surprise
    {0.1, 0.1, 0.05, 60, 30, 4},     // anticipation
}};

inline FlockConfig config_for(Emotion e, std::size_t flock_size = 100) {
    const auto& row = kMotionTable[index_of(e)];
    return {row.separation, row.alignment, row.cohesion, row.perception_range, row.separation_range, row.max_speed,
            flock_size};
}

struct EmotionTransition {
    FlockConfig from_config;
    Emotion to_emotion{Emotion::Joy};
    double duration{2.0};  // seconds
    double elapsed{0.0};   // seconds, clamped to [0, duration]

    [[nodiscard]] bool finished() const { return elapsed >= duration; }

    void advance(double seconds) { elapsed = std::min(duration, elapsed + seconds); }
};

// Componentwise linear blend; R and r are blended too, which makes neighbour
// sets switch discontinuously part-way through.
inline FlockConfig transition(const EmotionTransition& t) {
    FlockConfig target = config_for(t.to_emotion, t.from_config.flock_size);
    if (t.duration <= 0.0 || t.elapsed >= t.duration) return target;
    if (t.elapsed <= 0.0) return t.from_config;
    const double f = t.elapsed / t.duration;
    auto lerp = [f](double a, double b) { return a * (1.0 - f) + b * f; };
    const FlockConfig& a = t.from_config;
    return {lerp(a.separation, target.separation),
            lerp(a.alignment, target.alignment),
            lerp(a.cohesion, target.cohesion),
            lerp(a.perception_range, target.perception_range),
            lerp(a.separation_range, target.separation_range),
            lerp(a.max_speed, target.max_speed),
            a.flock_size};
}

}  // namespace heartbees
