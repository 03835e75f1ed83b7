#pragma once

// Tachogram resampling and Welch band powers for LF/HF estimation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace heartbees {

inline constexpr double kResampleHz = 4.0;
inline constexpr double kWelchSegmentSeconds = 64.0;
inline constexpr double kLfLow = 0.04;
inline constexpr double kLfHigh = 0.15;
inline constexpr double kHfHigh = 0.40;

struct BandPowers {
    double lf{0.0};
    double hf{0.0};
    double total{0.0};  // whole one-sided spectrum, same scale as lf/hf
};

// Linear interpolation of (time_s, value) points onto a uniform grid starting at
// the first time. Times must be strictly increasing.
inline std::vector<double> resample_uniform(std::span<const double> times_s, std::span<const double> values,
                                            double rate_hz) {
    if (times_s.size() != values.size()) throw std::invalid_argument("resample_uniform: size mismatch");
    std::vector<double> out;
    if (times_s.size() < 2) return out;
    const double t0 = times_s.front();
    const double span = times_s.back() - t0;
    const auto count = static_cast<std::size_t>(std::floor(span * rate_hz)) + 1;
    out.reserve(count);
    std::size_t k = 0;
    for (std::size_t n = 0; n < count; ++n) {
        const double t = t0 + static_cast<double>(n) / rate_hz;
        while (k + 2 < times_s.size() && times_s[k + 1] <= t) ++k;
        const double ta = times_s[k];
        const double tb = times_s[k + 1];
        const double a = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
        out.push_back(values[k] + (values[k + 1] - values[k]) * a);
    }
    return out;
}

inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
    return w;
}

// Welch estimate with Hann taper and 50% overlap. Only bins inside the LF and
// HF bands are transformed; the total is taken from the time domain
// (Parseval), so it covers the whole spectrum. The input is assumed detrended.
inline BandPowers welch_band_powers(std::span<const double> x, double rate_hz, std::size_t segment_len) {
    if (x.size() < 2) throw std::invalid_argument("welch_band_powers: need at least 2 samples");
    const std::size_t seg = std::min(segment_len, x.size());
    const std::size_t hop = std::max<std::size_t>(1, seg / 2);
    const auto window = hann_window(seg);
    const double energy = std::inner_product(window.begin(), window.end(), window.begin(), 0.0);

    const double df = rate_hz / static_cast<double>(seg);
    const auto first_bin = static_cast<std::size_t>(std::ceil(kLfLow / df));
    const auto last_bin = std::min(seg / 2, static_cast<std::size_t>(std::floor(kHfHigh / df)));

    BandPowers acc;
    std::size_t segments = 0;
    std::vector<double> y(seg);
    for (std::size_t start = 0; start + seg <= x.size(); start += hop) {
        for (std::size_t n = 0; n < seg; ++n) y[n] = x[start + n] * window[n];
        double sq = 0.0;
        for (double v : y) sq += v * v;
        acc.total += sq / energy;

        for (std::size_t k = first_bin; k <= last_bin; ++k) {
            const double f = static_cast<double>(k) * df;
            const bool lf = f >= kLfLow && f < kLfHigh;
            const bool hf = f >= kLfHigh && f <= kHfHigh;
            if (!lf && !hf) continue;
            std::complex<double> sum{0.0, 0.0};
            const double w0 = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(seg);
            for (std::size_t n = 0; n < seg; ++n) sum += y[n] * std::polar(1.0, w0 * static_cast<double>(n));
            const bool nyquist = (seg % 2 == 0) && k == seg / 2;
            const double p = (nyquist ? 1.0 : 2.0) * std::norm(sum) / (static_cast<double>(seg) * energy);
            (lf ? acc.lf : acc.hf) += p;
        }
        ++segments;
    }
    const double inv = 1.0 / static_cast<double>(segments);
    acc.lf *= inv;
    acc.hf *= inv;
    acc.total *= inv;
    return acc;
}

}  // namespace heartbees
