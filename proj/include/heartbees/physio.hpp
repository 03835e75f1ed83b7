#pragma once

// RR intervals -> HR / RMSSD / LF-HF -> High/Low footprint -> emotion candidates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "heartbees/emotion.hpp"
#include "heartbees/spectral.hpp"

namespace heartbees {

class PhysioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientData : public PhysioError {
public:
    using PhysioError::PhysioError;
};

class UndefinedRatio : public PhysioError {
public:
    using PhysioError::PhysioError;
};

inline constexpr double kMinRrMs = 300.0;
inline constexpr double kMaxRrMs = 2000.0;
inline constexpr std::int64_t kDefaultWindowMs = 60'000;
inline constexpr std::int64_t kDefaultHopMs = 5'000;
inline constexpr std::int64_t kBaselineHorizonMs = 600'000;
inline constexpr std::size_t kBaselineWarmupWindows = 3;
inline constexpr std::size_t kMinSpectralSamples = 30;
// A 60 s window holds at most 60 s of beats; one maximal RR of slack is allowed.
inline constexpr std::int64_t kMinSpectralSpanMs = kDefaultWindowMs - static_cast<std::int64_t>(kMaxRrMs);
inline constexpr double kUndefinedRatioFloor = 1e-12;

struct RRSample {
    std::int64_t timestamp_ms{0};
    double rr_ms{0.0};

    friend bool operator==(const RRSample&, const RRSample&) = default;
};

struct RRSeries {
    std::string person_id;
    std::vector<RRSample> samples;
};

// Artifact filter: rr within [300, 2000] ms and timestamps strictly increasing
// relative to the last accepted sample.
class RrFilter {
public:
    bool accept(const RRSample& s) {
        const bool ok = std::isfinite(s.rr_ms) && s.rr_ms >= kMinRrMs && s.rr_ms <= kMaxRrMs &&
                        (!last_ || s.timestamp_ms > *last_);
        if (ok) {
            last_ = s.timestamp_ms;
        } else {
            ++dropped_;
        }
        return ok;
    }
    [[nodiscard]] std::size_t dropped() const { return dropped_; }

private:
    std::optional<std::int64_t> last_;
    std::size_t dropped_{0};
};

struct IngestResult {
    RRSeries series;
    std::size_t dropped{0};
};

inline IngestResult ingest_rr(std::string person_id, std::span<const RRSample> raw) {
    IngestResult r;
    r.series.person_id = std::move(person_id);
    RrFilter filter;
    for (const auto& s : raw)
        if (filter.accept(s)) r.series.samples.push_back(s);
    r.dropped = filter.dropped();
    if (r.series.samples.empty())
        throw InsufficientData("ingest_rr: no samples left after filtering (" + std::to_string(r.dropped) +
                               " dropped)");
    return r;
}

inline double heart_rate(std::span<const RRSample> window) {
    if (window.size() < 2) throw InsufficientData("heart_rate: need at least 2 samples");
    double sum = 0.0;
    for (const auto& s : window) sum += s.rr_ms;
    return 60000.0 / (sum / static_cast<double>(window.size()));
}

class RmssdAccumulator {
public:
    void push(double rr_ms) {
        if (prev_) {
            const double d = rr_ms - *prev_;
            sum_sq_ += d * d;
            ++diffs_;
        }
        prev_ = rr_ms;
    }
    [[nodiscard]] std::size_t differences() const { return diffs_; }
    [[nodiscard]] double value() const {
        if (diffs_ < 2) throw InsufficientData("rmssd: need at least 3 samples");
        return std::sqrt(sum_sq_ / static_cast<double>(diffs_));
    }

private:
    std::optional<double> prev_;
    double sum_sq_{0.0};
    std::size_t diffs_{0};
};

inline double rmssd(std::span<const RRSample> window) {
    RmssdAccumulator acc;
    for (const auto& s : window) acc.push(s.rr_ms);
    return acc.value();
}

// Each sample's timestamp marks the end of its interval, so the first beat
// interval starts rr_ms before the first timestamp.
inline std::int64_t beat_coverage_ms(std::span<const RRSample> window) {
    if (window.empty()) return 0;
    return window.back().timestamp_ms - window.front().timestamp_ms +
           static_cast<std::int64_t>(std::llround(window.front().rr_ms));
}

inline BandPowers lf_hf_bands(std::span<const RRSample> window) {
    if (window.size() < kMinSpectralSamples || beat_coverage_ms(window) < kMinSpectralSpanMs)
        throw InsufficientData("lf_hf: window must span >= 60 s with >= 30 samples");
    std::vector<double> t(window.size());
    std::vector<double> v(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) {
        t[i] = static_cast<double>(window[i].timestamp_ms - window.front().timestamp_ms) / 1000.0;
        v[i] = window[i].rr_ms;
    }
    auto x = resample_uniform(t, v, kResampleHz);
    double mean = 0.0;
    for (double s : x) mean += s;
    mean /= static_cast<double>(x.size());
    for (double& s : x) s -= mean;
    const auto seg = static_cast<std::size_t>(kWelchSegmentSeconds * kResampleHz);
    return welch_band_powers(x, kResampleHz, seg);
}

inline double lf_hf(std::span<const RRSample> window) {
    const auto b = lf_hf_bands(window);
    if (b.hf <= kUndefinedRatioFloor * b.total || b.hf <= 0.0)
        throw UndefinedRatio("lf_hf: HF power is negligible; ratio undefined");
    return b.lf / b.hf;
}

struct TimeWindow {
    std::int64_t start_ms{0};
    std::int64_t end_ms{0};

    friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

struct HrvMetrics {
    double hr{0.0};
    double rmssd{0.0};
    std::optional<double> lf_hf;  // empty when the ratio is undefined or the window too short
    TimeWindow window;
};

inline HrvMetrics compute_metrics(std::span<const RRSample> window, TimeWindow bounds) {
    HrvMetrics m;
    m.hr = heart_rate(window);
    m.rmssd = rmssd(window);
    m.window = bounds;
    try {
        m.lf_hf = lf_hf(window);
    } catch (const PhysioError&) {
        m.lf_hf.reset();
    }
    return m;
}

// ---------------------------------------------------------------------------
// Footprints

enum class Level { Low, High };

struct Footprint {
    Level hr{Level::Low};
    Level rmssd{Level::Low};
    Level lf_hf{Level::Low};

    friend bool operator==(const Footprint&, const Footprint&) = default;

    [[nodiscard]] std::string str() const {
        auto c = [](Level l) { return l == Level::High ? 'H' : 'L'; };
        return {c(hr), c(rmssd), c(lf_hf)};
    }
};

struct Baseline {
    std::string person_id;
    double hr{0.0};
    double rmssd{0.0};
    std::optional<double> lf_hf;  // median over windows where the ratio was defined
    std::size_t windows{0};
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// Rolling per-person medians over the trailing horizon of past windows.
class BaselineTracker {
public:
    explicit BaselineTracker(std::string person_id, std::int64_t horizon_ms = kBaselineHorizonMs)
        : person_id_(std::move(person_id)), horizon_ms_(horizon_ms) {}

    void add(const HrvMetrics& m) { history_.push_back(m); }

    // Baseline from windows ending within the horizon before `now_ms`.
    [[nodiscard]] std::optional<Baseline> at(std::int64_t now_ms) const {
        std::vector<double> hr, rm, lh;
        for (const auto& m : history_) {
            if (m.window.end_ms <= now_ms - horizon_ms_ || m.window.end_ms > now_ms) continue;
            hr.push_back(m.hr);
            rm.push_back(m.rmssd);
            if (m.lf_hf) lh.push_back(*m.lf_hf);
        }
        if (hr.size() < kBaselineWarmupWindows) return std::nullopt;
        Baseline b{person_id_, median(hr), median(rm), std::nullopt, hr.size()};
        if (!lh.empty()) b.lf_hf = median(lh);
        return b;
    }

    void prune(std::int64_t now_ms) {
        while (!history_.empty() && history_.front().window.end_ms <= now_ms - horizon_ms_) history_.pop_front();
    }

private:
    std::string person_id_;
    std::int64_t horizon_ms_;
    std::deque<HrvMetrics> history_;
};

// High only when strictly above the baseline median. An undefined ratio (or
// baseline ratio) reads as Low.
inline Footprint discretize(const HrvMetrics& m, const std::optional<Baseline>& b) {
    if (!b || b->windows < kBaselineWarmupWindows) throw PhysioError("discretize: baseline not warmed up");
    Footprint f;
    f.hr = m.hr > b->hr ? Level::High : Level::Low;
    f.rmssd = m.rmssd > b->rmssd ? Level::High : Level::Low;
    f.lf_hf = (m.lf_hf && b->lf_hf && *m.lf_hf > *b->lf_hf) ? Level::High : Level::Low;
    return f;
}

// Candidate emotions for a footprint, canonical order; nullopt for the two
// patterns that map to nothing (LLL, LHH).
inline std::optional<std::vector<Emotion>> classify(const Footprint& f) {
    using E = Emotion;
    constexpr auto H = Level::High;
    constexpr auto L = Level::Low;
    const auto key = std::array{f.hr, f.rmssd, f.lf_hf};
    if (key == std::array{H, L, L}) return std::vector{E::Joy};
    if (key == std::array{H, H, H}) return std::vector{E::Disgust};
    if (key == std::array{H, H, L}) return std::vector{E::Trust, E::Surprise};
    if (key == std::array{H, L, H}) return std::vector{E::Anger};
    if (key == std::array{L, H, L}) return std::vector{E::Anticipation};
    if (key == std::array{L, L, H}) return std::vector{E::Sadness, E::Fear};
    return std::nullopt;
}

inline Emotion resolve(std::span<const Emotion> candidates, std::optional<Emotion> prior) {
    if (candidates.empty()) throw std::invalid_argument("resolve: empty candidate set");
    if (candidates.size() == 1) return candidates.front();
    if (prior && std::find(candidates.begin(), candidates.end(), *prior) != candidates.end()) return *prior;
    return *std::min_element(candidates.begin(), candidates.end());
}

struct EmotionAssessment {
    std::string person_id;
    Footprint footprint;
    std::vector<Emotion> candidates;
    Emotion chosen{Emotion::Joy};
};

// Plurality vote; ties go to the earliest emotion in canonical order.
inline Emotion aggregate(std::span<const Emotion> votes) {
    if (votes.empty()) throw std::invalid_argument("aggregate: no assessments");
    std::array<std::size_t, 8> counts{};
    for (Emotion e : votes) ++counts[index_of(e)];
    const auto best = std::max_element(counts.begin(), counts.end());  // first maximum wins
    return kAllEmotions[static_cast<std::size_t>(best - counts.begin())];
}

inline Emotion aggregate(std::span<const EmotionAssessment> assessments) {
    std::vector<Emotion> votes;
    votes.reserve(assessments.size());
    for (const auto& a : assessments) votes.push_back(a.chosen);
    return aggregate(std::span<const Emotion>(votes));
}

// ---------------------------------------------------------------------------
// Per-person sliding-window pipeline

enum class WindowStatus { Insufficient, Warmup, NoMatch, Assessed };

inline constexpr std::string_view name_of(WindowStatus s) {
    switch (s) {
        case WindowStatus::Insufficient: return "insufficient";
        case WindowStatus::Warmup: return "warmup";
        case WindowStatus::NoMatch: return "no_match";
        case WindowStatus::Assessed: return "assessed";
    }
    return "?";
}

struct WindowResult {
    std::string person_id;
    TimeWindow window;
    WindowStatus status{WindowStatus::Insufficient};
    std::optional<HrvMetrics> metrics;
    std::optional<Footprint> footprint;
    std::optional<EmotionAssessment> assessment;
};

class PersonPipeline {
public:
    explicit PersonPipeline(std::string person_id, std::int64_t window_ms = kDefaultWindowMs,
                            std::int64_t hop_ms = kDefaultHopMs)
        : person_id_(std::move(person_id)), window_ms_(window_ms), hop_ms_(hop_ms), baseline_(person_id_) {
        if (window_ms <= 0 || hop_ms <= 0) throw std::invalid_argument("window and hop must be positive");
    }

    struct PushOutcome {
        bool accepted{false};
        std::vector<WindowResult> closed;
    };

    PushOutcome push(const RRSample& s) {
        PushOutcome out;
        if (!filter_.accept(s)) return out;
        out.accepted = true;
        if (!start_) start_ = s.timestamp_ms;
        while (s.timestamp_ms >= *start_ + window_ms_) {
            if (samples_.empty()) {
                // Skip over a gap without emitting empty windows.
                const auto k = (s.timestamp_ms - *start_ - window_ms_) / hop_ms_ + 1;
                *start_ += k * hop_ms_;
                break;
            }
            out.closed.push_back(close_window());
            *start_ += hop_ms_;
            while (!samples_.empty() && samples_.front().timestamp_ms < *start_) samples_.pop_front();
        }
        samples_.push_back(s);
        return out;
    }

    [[nodiscard]] const std::string& person_id() const { return person_id_; }
    [[nodiscard]] std::size_t dropped() const { return filter_.dropped(); }
    [[nodiscard]] std::optional<Emotion> last_chosen() const { return prior_; }
    [[nodiscard]] const std::optional<EmotionAssessment>& latest() const { return latest_; }

private:
    WindowResult close_window() {
        WindowResult r;
        r.person_id = person_id_;
        r.window = {*start_, *start_ + window_ms_};
        const std::vector<RRSample> win(samples_.begin(), samples_.end());
        if (win.size() < 3) return r;

        HrvMetrics m = compute_metrics(win, r.window);
        r.metrics = m;
        const auto base = baseline_.at(r.window.end_ms);
        baseline_.add(m);
        baseline_.prune(r.window.end_ms);
        if (!base) {
            r.status = WindowStatus::Warmup;
            return r;
        }
        const Footprint fp = discretize(m, base);
        r.footprint = fp;
        const auto candidates = classify(fp);
        if (!candidates) {
            latest_.reset();  // abstains from the collective vote
            r.status = WindowStatus::NoMatch;
            return r;
        }
        EmotionAssessment a{person_id_, fp, *candidates, resolve(*candidates, prior_)};
        prior_ = a.chosen;
        latest_ = a;
        r.assessment = std::move(a);
        r.status = WindowStatus::Assessed;
        return r;
    }

    std::string person_id_;
    std::int64_t window_ms_;
    std::int64_t hop_ms_;
    RrFilter filter_;
    BaselineTracker baseline_;
    std::optional<std::int64_t> start_;
    std::deque<RRSample> samples_;
    std::optional<Emotion> prior_;
    std::optional<EmotionAssessment> latest_;
};

}  // namespace heartbees
