#pragma once

// Single-threaded session core: owns the flock, the per-person physiology
// pipelines and the collective emotion. All I/O goes through JSON lines so the
// same object drives the live server and log replay.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "heartbees/emotion.hpp"
#include "heartbees/flock.hpp"
#include "heartbees/physio.hpp"
#include "heartbees/render.hpp"

namespace heartbees {

struct SessionOptions {
    std::string session_id{"default"};
    Emotion emotion{Emotion::Joy};
    double tick_rate{30.0};  // steps per second
    std::uint64_t seed{1};
    Bounds bounds{};
    std::size_t flock_size{100};
    Aesthetics aesthetics{};
    double transition_seconds{2.0};
    std::int64_t window_ms{kDefaultWindowMs};
    std::int64_t hop_ms{kDefaultHopMs};

    [[nodiscard]] std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!std::isfinite(tick_rate) || tick_rate <= 0.0) out.emplace_back("tick_rate: must be > 0");
        if (flock_size < 1) out.emplace_back("flock_size: must be >= 1");
        if (!std::isfinite(bounds.width) || bounds.width <= 0.0) out.emplace_back("bounds.width: must be > 0");
        if (!std::isfinite(bounds.height) || bounds.height <= 0.0) out.emplace_back("bounds.height: must be > 0");
        if (!std::isfinite(transition_seconds) || transition_seconds < 0.0)
            out.emplace_back("transition_seconds: must be >= 0");
        if (window_ms <= 0) out.emplace_back("window_ms: must be > 0");
        if (hop_ms <= 0) out.emplace_back("hop_ms: must be > 0");
        for (auto& v : aesthetics.violations()) out.push_back("aesthetics." + v);
        return out;
    }
};

inline nlohmann::json to_json(const SessionOptions& o) {
    return {{"session_id", o.session_id},
            {"emotion", std::string(name_of(o.emotion))},
            {"tick_rate", o.tick_rate},
            {"seed", o.seed},
            {"bounds", {o.bounds.width, o.bounds.height}},
            {"flock_size", o.flock_size},
            {"aesthetics",
             {{"stroke_length", o.aesthetics.stroke_length},
              {"stroke_width", o.aesthetics.stroke_width},
              {"background", std::string(name_of(o.aesthetics.background))},
              {"palette", std::string(name_of(o.aesthetics.palette))}}},
            {"transition_seconds", o.transition_seconds},
            {"window_ms", o.window_ms},
            {"hop_ms", o.hop_ms}};
}

inline SessionOptions session_options_from_json(const nlohmann::json& j) {
    SessionOptions o;
    o.session_id = j.value("session_id", o.session_id);
    if (j.contains("emotion")) o.emotion = parse_emotion(j.at("emotion").get<std::string>());
    o.tick_rate = j.value("tick_rate", o.tick_rate);
    o.seed = j.value("seed", o.seed);
    if (j.contains("bounds")) o.bounds = {j.at("bounds").at(0).get<double>(), j.at("bounds").at(1).get<double>()};
    o.flock_size = j.value("flock_size", o.flock_size);
    if (j.contains("aesthetics")) {
        const auto& a = j.at("aesthetics");
        o.aesthetics.stroke_length = a.value("stroke_length", o.aesthetics.stroke_length);
        o.aesthetics.stroke_width = a.value("stroke_width", o.aesthetics.stroke_width);
        if (a.contains("background")) o.aesthetics.background = parse_background(a.at("background").get<std::string>());
        if (a.contains("palette")) o.aesthetics.palette = parse_palette(a.at("palette").get<std::string>());
    }
    o.transition_seconds = j.value("transition_seconds", o.transition_seconds);
    o.window_ms = j.value("window_ms", o.window_ms);
    o.hop_ms = j.value("hop_ms", o.hop_ms);
    return o;
}

inline nlohmann::json to_json(const FlockConfig& c) {
    return {{"separation", c.separation},
            {"alignment", c.alignment},
            {"cohesion", c.cohesion},
            {"perception_range", c.perception_range},
            {"separation_range", c.separation_range},
            {"max_speed", c.max_speed},
            {"flock_size", c.flock_size}};
}

// An outbound message before sequencing; `data` is serialised JSON.
struct Outbound {
    std::string kind;
    std::string data;
};

// Per-connection sequencing: {"seq":N,"kind":K,"data":D}
class Sequencer {
public:
    std::string frame(const Outbound& m) {
        return "{\"seq\":" + std::to_string(++seq_) + ",\"kind\":\"" + m.kind + "\",\"data\":" + m.data + "}";
    }
    [[nodiscard]] std::uint64_t last() const { return seq_; }

private:
    std::uint64_t seq_{0};
};

namespace detail {

inline void append_fixed2(std::string& out, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string_view s(buf);
    if (s == "-0.00") s = "0.00";
    out += s;
}

}  // namespace detail

class Session {
public:
    explicit Session(SessionOptions options) : options_(std::move(options)) {
        const auto v = options_.violations();
        if (!v.empty()) {
            std::string msg = "invalid session options:";
            for (const auto& s : v) msg += " " + s + ";";
            throw std::invalid_argument(msg);
        }
        emotion_ = options_.emotion;
        active_ = config_for(emotion_, options_.flock_size);
        aesthetics_ = options_.aesthetics;
        state_ = init_flock(active_, options_.bounds, options_.seed);
    }

    [[nodiscard]] const SessionOptions& options() const { return options_; }
    [[nodiscard]] Emotion emotion() const { return emotion_; }
    [[nodiscard]] const FlockConfig& active_config() const { return active_; }
    [[nodiscard]] const FlockState& flock() const { return state_; }
    [[nodiscard]] const Aesthetics& aesthetics() const { return aesthetics_; }
    [[nodiscard]] const std::optional<EmotionTransition>& pending_transition() const { return transition_; }
    [[nodiscard]] std::uint64_t tick() const { return state_.tick; }
    [[nodiscard]] std::size_t dropped_samples() const { return dropped_; }
    [[nodiscard]] std::size_t malformed_messages() const { return malformed_; }
    [[nodiscard]] bool override_active() const { return override_; }
    [[nodiscard]] std::size_t participants() const { return people_.size(); }

    [[nodiscard]] std::optional<FlockConfig> transition_target() const {
        if (!transition_) return std::nullopt;
        return config_for(transition_->to_emotion, active_.flock_size);
    }

    // Per-person metrics stay inside the session; only collective state leaves it.
    [[nodiscard]] const PersonPipeline* person(const std::string& id) const {
        auto it = people_.find(id);
        return it == people_.end() ? nullptr : &it->second;
    }

    // Parses and applies one inbound line. Never throws: problems become
    // "error" messages (or silent drop counts for rr samples).
    std::vector<Outbound> handle_line(std::string_view line) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception&) {
            ++malformed_;
            return {error("malformed JSON")};
        }
        return handle(j);
    }

    std::vector<Outbound> handle(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
            ++malformed_;
            return {error("message must be an object with a string 'kind'")};
        }
        const auto kind = j.at("kind").get<std::string>();
        try {
            if (kind == "rr_sample") return handle_rr_message(j);
            if (kind == "set_emotion") return handle_override(j.at("emotion").get<std::string>());
            if (kind == "set_config") return handle_set_config(j.at("config"));
            if (kind == "set_aesthetics") return handle_set_aesthetics(j.at("aesthetics"));
        } catch (const std::exception& e) {
            ++malformed_;
            return {error(kind + ": " + e.what())};
        }
        ++malformed_;
        return {error("unknown kind '" + kind + "'")};
    }

    struct RrResult {
        std::optional<Emotion> changed;
        std::vector<Outbound> messages;
    };

    RrResult handle_rr(const std::string& person_id, std::int64_t timestamp_ms, double rr_ms) {
        RrResult r;
        auto it = people_.find(person_id);
        if (it == people_.end())
            it = people_.emplace(person_id, PersonPipeline(person_id, options_.window_ms, options_.hop_ms)).first;
        auto outcome = it->second.push({timestamp_ms, rr_ms});
        if (!outcome.accepted) {
            ++dropped_;
            return r;
        }
        for (std::size_t w = 0; w < outcome.closed.size(); ++w) {
            std::vector<Emotion> votes;
            for (const auto& [id, p] : people_)
                if (p.latest()) votes.push_back(p.latest()->chosen);
            std::optional<Emotion> collective;
            if (!votes.empty()) collective = aggregate(std::span<const Emotion>(votes));
            if (collective) {
                if (override_) {
                    divergent_ = (*collective != emotion_) ? divergent_ + 1 : 0;
                    if (divergent_ >= 2) {
                        override_ = false;
                        divergent_ = 0;
                        r.messages.push_back(begin_transition(*collective, "physio"));
                        r.changed = *collective;
                    }
                } else if (*collective != emotion_) {
                    r.messages.push_back(begin_transition(*collective, "physio"));
                    r.changed = *collective;
                }
            }
            r.messages.push_back(metrics_update(votes, collective));
        }
        return r;
    }

    std::vector<Outbound> handle_override(std::string_view name) {
        Emotion e;
        try {
            e = parse_emotion(name);
        } catch (const UnknownEmotion& ex) {
            return {error(ex.what())};
        }
        if (e == emotion_) return {ack("set_emotion", false)};
        override_ = true;
        divergent_ = 0;
        auto changed = begin_transition(e, "override");
        return {ack("set_emotion", true), std::move(changed)};
    }

    // Advances one step and returns the resulting snapshot.
    Outbound advance() {
        const double dt_seconds = 1.0 / options_.tick_rate;
        if (transition_) active_ = transition(*transition_);
        state_ = step(state_, active_);
        if (transition_) {
            transition_->advance(dt_seconds);
            if (transition_->finished()) {
                active_ = transition(*transition_);
                transition_.reset();
            }
        }
        return snapshot();
    }

    [[nodiscard]] Outbound snapshot() const {
        std::string d;
        d.reserve(64 + state_.boids.size() * 40);
        d += "{\"session_id\":";
        d += nlohmann::json(options_.session_id).dump();
        d += ",\"tick\":" + std::to_string(state_.tick);
        d += ",\"emotion\":\"" + std::string(name_of(emotion_)) + "\"";
        d += ",\"config\":" + to_json(active_).dump();
        d += ",\"aesthetics\":" + aesthetics_json().dump();
        d += ",\"bounds\":" + nlohmann::json({options_.bounds.width, options_.bounds.height}).dump();
        d += ",\"boids\":[";
        for (std::size_t i = 0; i < state_.boids.size(); ++i) {
            const auto& b = state_.boids[i];
            if (i) d += ',';
            d += '[';
            detail::append_fixed2(d, b.position.x);
            d += ',';
            detail::append_fixed2(d, b.position.y);
            d += ',';
            detail::append_fixed2(d, b.velocity.x);
            d += ',';
            detail::append_fixed2(d, b.velocity.y);
            d += ']';
        }
        d += "]}";
        return {"state_snapshot", std::move(d)};
    }

private:
    std::vector<Outbound> handle_rr_message(const nlohmann::json& j) {
        const auto& pid = j.at("person_id");
        const auto& ts = j.at("timestamp_ms");
        const auto& rr = j.at("rr_ms");
        if (!pid.is_string() || !ts.is_number_integer() || !rr.is_number()) {
            ++malformed_;
            return {};
        }
        return handle_rr(pid.get<std::string>(), ts.get<std::int64_t>(), rr.get<double>()).messages;
    }

    std::vector<Outbound> handle_set_config(const nlohmann::json& c) {
        FlockConfig next = active_;
        next.separation = c.value("separation", next.separation);
        next.alignment = c.value("alignment", next.alignment);
        next.cohesion = c.value("cohesion", next.cohesion);
        next.perception_range = c.value("perception_range", next.perception_range);
        next.separation_range = c.value("separation_range", next.separation_range);
        next.max_speed = c.value("max_speed", next.max_speed);
        next.flock_size = c.value("flock_size", next.flock_size);
        const auto v = next.violations();
        if (!v.empty()) {
            std::string msg = "set_config rejected:";
            for (const auto& s : v) msg += " " + s + ";";
            return {error(msg)};
        }
        transition_.reset();
        if (next.flock_size != state_.boids.size()) resize_flock(state_, next.flock_size, next.max_speed);
        active_ = next;
        return {ack("set_config", true)};
    }

    std::vector<Outbound> handle_set_aesthetics(const nlohmann::json& a) {
        Aesthetics next = aesthetics_;
        next.stroke_length = a.value("stroke_length", next.stroke_length);
        next.stroke_width = a.value("stroke_width", next.stroke_width);
        if (a.contains("background")) next.background = parse_background(a.at("background").get<std::string>());
        if (a.contains("palette")) next.palette = parse_palette(a.at("palette").get<std::string>());
        const auto v = next.violations();
        if (!v.empty()) {
            std::string msg = "set_aesthetics rejected:";
            for (const auto& s : v) msg += " " + s + ";";
            return {error(msg)};
        }
        aesthetics_ = next;
        return {ack("set_aesthetics", true)};
    }

    Outbound begin_transition(Emotion to, std::string_view source) {
        const Emotion from = emotion_;
        transition_ = EmotionTransition{active_, to, options_.transition_seconds, 0.0};
        emotion_ = to;
        nlohmann::json d{{"from", std::string(name_of(from))},
                         {"to", std::string(name_of(to))},
                         {"source", std::string(source)},
                         {"tick", state_.tick},
                         {"target", to_json(config_for(to, active_.flock_size))}};
        return {"emotion_changed", d.dump()};
    }

    Outbound metrics_update(const std::vector<Emotion>& votes, std::optional<Emotion> collective) const {
        nlohmann::json tally = nlohmann::json::object();
        for (Emotion e : kAllEmotions) {
            const auto n = std::count(votes.begin(), votes.end(), e);
            if (n) tally[std::string(name_of(e))] = n;
        }
        nlohmann::json d{{"participants", people_.size()},
                         {"voting", votes.size()},
                         {"votes", tally},
                         {"collective", collective ? nlohmann::json(std::string(name_of(*collective))) : nullptr},
                         {"emotion", std::string(name_of(emotion_))},
                         {"dropped_samples", dropped_},
                         {"malformed_messages", malformed_}};
        return {"metrics_update", d.dump()};
    }

    [[nodiscard]] nlohmann::json aesthetics_json() const {
        return {{"stroke_length", aesthetics_.stroke_length},
                {"stroke_width", aesthetics_.stroke_width},
                {"background", std::string(name_of(aesthetics_.background))},
                {"palette", std::string(name_of(aesthetics_.palette))}};
    }

    static Outbound ack(std::string_view what, bool changed) {
        return {"ack", nlohmann::json{{"for", std::string(what)}, {"changed", changed}}.dump()};
    }

    static Outbound error(std::string_view message) {
        return {"error", nlohmann::json{{"message", std::string(message)}}.dump()};
    }

    SessionOptions options_;
    FlockState state_;
    FlockConfig active_;
    Aesthetics aesthetics_;
    Emotion emotion_{Emotion::Joy};
    std::optional<EmotionTransition> transition_;
    std::map<std::string, PersonPipeline> people_;
    bool override_{false};
    int divergent_{0};
    std::size_t dropped_{0};
    std::size_t malformed_{0};
};

// ---------------------------------------------------------------------------
// Inbound logs and replay
//
// Log lines:
//   {"header":{...session options...}}
//   {"tick":T,"raw":"<inbound line>"}   applied before step T+1
//   {"tick":T,"end":true}               the session ran T steps

class LogParseError : public std::runtime_error {
public:
    LogParseError(std::size_t line, const std::string& what)
        : std::runtime_error("log line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct LoggedInbound {
    std::uint64_t tick{0};
    std::string raw;
};

struct InboundLog {
    std::optional<SessionOptions> header;
    std::vector<LoggedInbound> messages;
    std::optional<std::uint64_t> end_tick;
};

class InboundRecorder {
public:
    explicit InboundRecorder(std::ostream& out) : out_(out) {}

    void header(const SessionOptions& o) { out_ << nlohmann::json{{"header", to_json(o)}}.dump() << '\n'; }
    void message(std::uint64_t tick, std::string_view raw) {
        out_ << nlohmann::json{{"tick", tick}, {"raw", std::string(raw)}}.dump() << '\n';
    }
    void end(std::uint64_t tick) {
        out_ << nlohmann::json{{"tick", tick}, {"end", true}}.dump() << '\n';
        out_.flush();
    }

private:
    std::ostream& out_;
};

inline InboundLog read_inbound_log(std::istream& in) {
    InboundLog log;
    std::string line;
    std::size_t n = 0;
    std::uint64_t last_tick = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw LogParseError(n, "expected an object");
            if (j.contains("header")) {
                if (log.header || !log.messages.empty()) throw LogParseError(n, "header must be the first record");
                log.header = session_options_from_json(j.at("header"));
                continue;
            }
            if (log.end_tick) throw LogParseError(n, "record after end marker");
            const auto tick = j.at("tick").get<std::uint64_t>();
            if (tick < last_tick) throw LogParseError(n, "ticks must be non-decreasing");
            last_tick = tick;
            if (j.value("end", false)) {
                log.end_tick = tick;
                continue;
            }
            log.messages.push_back({tick, j.at("raw").get<std::string>()});
        } catch (const LogParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw LogParseError(n, e.what());
        }
    }
    return log;
}

// Re-executes a log; every outbound message is passed, already sequenced for a
// single viewer that joined at tick 0, to `sink`.
template <class Sink>
void replay(const InboundLog& log, const SessionOptions& options, std::uint64_t min_ticks, Sink&& sink) {
    Session session(options);
    Sequencer seq;
    sink(seq.frame(session.snapshot()));
    std::uint64_t ticks = min_ticks;
    if (!log.messages.empty()) ticks = std::max(ticks, log.messages.back().tick + 1);
    if (log.end_tick) ticks = *log.end_tick;
    std::size_t next = 0;
    // Messages logged at the final tick arrived after the last step; they are
    // applied but not followed by another step.
    for (std::uint64_t t = 0; t <= ticks; ++t) {
        while (next < log.messages.size() && log.messages[next].tick == t) {
            for (const auto& m : session.handle_line(log.messages[next].raw)) sink(seq.frame(m));
            ++next;
        }
        if (t < ticks) sink(seq.frame(session.advance()));
    }
}

}  // namespace heartbees
