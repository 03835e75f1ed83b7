#pragma once

// Reference normalised perception matrix (rows: displayed emotion, columns:
// respondent association, both in the order below) and a count matrix that
// reproduces it. Counts are value*1000 with each column's rounding residual
// spread one unit at a time across rows so every column totals 1000.

#include <array>
#include <cmath>
#include <string>

#include "heartbees/emotion.hpp"

namespace fixture {

using heartbees::Emotion;

inline constexpr std::array<Emotion, 8> kReferenceOrder{Emotion::Joy,      Emotion::Disgust,      Emotion::Trust,
                                                        Emotion::Anger,    Emotion::Surprise,     Emotion::Anticipation,
                                                        Emotion::Sadness,  Emotion::Fear};

inline constexpr std::array<std::array<double, 8>, 8> kReference{{
    {0.17, 0.03, 0.15, 0.05, 0.09, 0.14, 0.11, 0.06},
    {0.14, 0.07, 0.11, 0.06, 0.12, 0.14, 0.12, 0.12},
    {0.11, 0.07, 0.17, 0.14, 0.09, 0.15, 0.10, 0.13},
    {0.07, 0.10, 0.03, 0.40, 0.27, 0.09, 0.03, 0.22},
    {0.15, 0.08, 0.12, 0.06, 0.09, 0.15, 0.10, 0.09},
    {0.16, 0.10, 0.09, 0.08, 0.15, 0.11, 0.08, 0.10},
    {0.07, 0.34, 0.21, 0.06, 0.08, 0.09, 0.28, 0.13},
    {0.12, 0.19, 0.12, 0.13, 0.10, 0.12, 0.15, 0.13},
}};

inline std::array<std::array<long, 8>, 8> consistent_counts() {
    std::array<std::array<long, 8>, 8> c{};
    for (std::size_t j = 0; j < 8; ++j) {
        long total = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            c[i][j] = std::lround(kReference[i][j] * 1000.0);
            total += c[i][j];
        }
        long residual = 1000 - total;
        for (std::size_t i = 0; residual != 0; i = (i + 1) % 8) {
            const long unit = residual > 0 ? 1 : -1;
            if (c[i][j] + unit < 0) continue;
            c[i][j] += unit;
            residual -= unit;
        }
    }
    return c;
}

inline std::string perception_counts_csv() {
    const auto c = consistent_counts();
    std::string out = "displayed";
    for (Emotion e : kReferenceOrder) out += "," + std::string(heartbees::name_of(e));
    out += "\n";
    for (std::size_t i = 0; i < 8; ++i) {
        out += heartbees::name_of(kReferenceOrder[i]);
        for (std::size_t j = 0; j < 8; ++j) out += "," + std::to_string(c[i][j]);
        out += "\n";
    }
    return out;
}

}  // namespace fixture
