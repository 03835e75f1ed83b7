#pragma once

// Synthetic RR streams with known High/Low footprints relative to a resting
// baseline.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "heartbees/physio.hpp"

namespace streams {

// Resting: ~60 bpm, strong beat-to-beat alternation (high RMSSD), strong
// 0.1 Hz modulation (high LF/HF).
inline double resting_rr(double t_s, std::size_t k) {
    return 1000.0 + 40.0 * std::sin(2.0 * std::numbers::pi * 0.10 * t_s) +
           5.0 * std::sin(2.0 * std::numbers::pi * 0.25 * t_s) + (k % 2 ? 25.0 : -25.0);
}

// Joy-like: faster heart (HR up), small variability (RMSSD down), mostly
// respiratory-band modulation (LF/HF down).
inline double joyful_rr(double t_s, std::size_t) {
    return 700.0 + 8.0 * std::sin(2.0 * std::numbers::pi * 0.30 * t_s) +
           1.0 * std::sin(2.0 * std::numbers::pi * 0.10 * t_s);
}

template <class Rest, class Active>
std::vector<heartbees::RRSample> two_phase(double rest_s, double active_s, Rest rest, Active active,
                                           std::int64_t t0_ms = 0) {
    std::vector<heartbees::RRSample> out;
    double t = 0.0;
    std::size_t k = 0;
    while (t < (rest_s + active_s) * 1000.0) {
        const double ts = t / 1000.0;
        const double rr = ts < rest_s ? rest(ts, k) : active(ts, k);
        t += rr;
        ++k;
        out.push_back({t0_ms + static_cast<std::int64_t>(std::llround(t)), rr});
    }
    return out;
}

inline std::vector<heartbees::RRSample> joy_after_rest(double rest_s = 600.0, double joy_s = 180.0,
                                                       std::int64_t t0_ms = 0) {
    return two_phase(rest_s, joy_s, resting_rr, joyful_rr, t0_ms);
}

inline std::vector<heartbees::RRSample> constant(double seconds, double rr_ms, std::int64_t t0_ms = 0) {
    std::vector<heartbees::RRSample> out;
    for (double t = rr_ms; t <= seconds * 1000.0; t += rr_ms)
        out.push_back({t0_ms + static_cast<std::int64_t>(std::llround(t)), rr_ms});
    return out;
}

}  // namespace streams
