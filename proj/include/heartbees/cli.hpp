#pragma once

// Batch commands behind the `heartbees` executable. Each takes plain option
// structs and streams so they can be exercised without spawning a process.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "heartbees/analysis.hpp"
#include "heartbees/emotion.hpp"
#include "heartbees/flock.hpp"
#include "heartbees/physio.hpp"
#include "heartbees/render.hpp"
#include "heartbees/trajectory.hpp"

namespace heartbees::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2 };

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Size2 {
    double width{0};
    double height{0};
};

// "800x600"
inline Size2 parse_size(const std::string& s) {
    const auto x = s.find_first_of("xX");
    if (x == std::string::npos) throw UsageError("size must look like WIDTHxHEIGHT, got '" + s + "'");
    try {
        std::size_t used_w = 0, used_h = 0;
        const std::string ws = s.substr(0, x), hs = s.substr(x + 1);
        Size2 out{std::stod(ws, &used_w), std::stod(hs, &used_h)};
        if (used_w != ws.size() || used_h != hs.size() || !(out.width > 0) || !(out.height > 0))
            throw std::invalid_argument("bad");
        return out;
    } catch (const std::exception&) {
        throw UsageError("size must look like WIDTHxHEIGHT with positive numbers, got '" + s + "'");
    }
}

inline std::string motion_table_help() {
    std::string out = "Emotion motion table (S separation, M alignment, K cohesion, R perception range,\n"
                      "r separation range, V max speed):\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %-13s %5s %5s %5s %4s %4s %4s\n", "emotion", "S", "M", "K", "R", "r", "V");
    out += buf;
    for (Emotion e : kAllEmotions) {
        const auto c = config_for(e);
        std::snprintf(buf, sizeof buf, "  %-13s %5g %5g %5g %4g %4g %4g\n", std::string(name_of(e)).c_str(),
                      c.separation, c.alignment, c.cohesion, c.perception_range, c.separation_range, c.max_speed);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
    Emotion emotion{Emotion::Joy};
    std::uint64_t frames{100};
    std::uint64_t seed{1};
    std::size_t flock_size{100};
    Bounds bounds{};
};

// One record per step, ticks 1..frames.
inline void simulate(const SimulateOptions& o, std::ostream& out) {
    const FlockConfig config = config_for(o.emotion, o.flock_size);
    FlockState state = init_flock(config, o.bounds, o.seed);
    for (std::uint64_t f = 0; f < o.frames; ++f) {
        state = step(state, config);
        write_record(out, to_record(state));
    }
}

// ---------------------------------------------------------------------------

struct RenderOptions {
    Aesthetics aesthetics{};
    int width{800};
    int height{600};
    std::filesystem::path outdir{"frames"};
};

inline std::string frame_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", index);
    return buf;
}

// Returns the number of frames written.
inline std::size_t render(const RenderOptions& o, std::istream& trajectory) {
    o.aesthetics.validate();
    std::vector<TrajectoryRecord> records;
    try {
        records = read_trajectory(trajectory);
    } catch (const TrajectoryParseError& e) {
        throw DataError(e.what());
    }
    if (records.empty()) return 0;
    std::filesystem::create_directories(o.outdir);
    TrailBuffer trails;
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            trails.update(records[i].boids, records[i].bounds, o.aesthetics);
        } catch (const std::invalid_argument& e) {
            throw DataError("trajectory record " + std::to_string(i + 1) + ": " + e.what());
        }
        const Frame f = render_frame(trails, o.aesthetics, o.width, o.height);
        const auto path = o.outdir / frame_filename(i);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << encode_ppm(f);
    }
    return records.size();
}

// ---------------------------------------------------------------------------

struct RrRow {
    std::string person_id;
    RRSample sample;
};

// CSV with header person_id,timestamp_ms,rr_ms.
inline std::vector<RrRow> read_rr_csv(std::istream& in) {
    std::vector<RrRow> rows;
    std::string line;
    std::size_t n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (!header) {
            if (cells != std::vector<std::string>{"person_id", "timestamp_ms", "rr_ms"})
                throw DataError("rr csv line " + std::to_string(n) + ": expected header person_id,timestamp_ms,rr_ms");
            header = true;
            continue;
        }
        if (cells.size() != 3 || cells[0].empty())
            throw DataError("rr csv line " + std::to_string(n) + ": expected 3 fields");
        try {
            std::size_t used_t = 0, used_r = 0;
            const auto ts = std::stoll(cells[1], &used_t);
            const auto rr = std::stod(cells[2], &used_r);
            if (used_t != cells[1].size() || used_r != cells[2].size()) throw std::invalid_argument("trailing");
            rows.push_back({cells[0], {ts, rr}});
        } catch (const std::exception&) {
            throw DataError("rr csv line " + std::to_string(n) + ": malformed number");
        }
    }
    if (!header) throw DataError("rr csv: missing header person_id,timestamp_ms,rr_ms");
    return rows;
}

inline nlohmann::json to_json(const WindowResult& r) {
    nlohmann::json j;
    j["person_id"] = r.person_id;
    j["window"] = {r.window.start_ms, r.window.end_ms};
    j["status"] = std::string(name_of(r.status));
    j["hr"] = r.metrics ? nlohmann::json(r.metrics->hr) : nlohmann::json(nullptr);
    j["rmssd"] = r.metrics ? nlohmann::json(r.metrics->rmssd) : nlohmann::json(nullptr);
    j["lf_hf"] = (r.metrics && r.metrics->lf_hf) ? nlohmann::json(*r.metrics->lf_hf) : nlohmann::json(nullptr);
    j["footprint"] = r.footprint ? nlohmann::json(r.footprint->str()) : nlohmann::json(nullptr);
    nlohmann::json candidates = nlohmann::json::array();
    if (r.assessment)
        for (Emotion e : r.assessment->candidates) candidates.push_back(std::string(name_of(e)));
    j["candidates"] = candidates;
    j["chosen"] = r.assessment ? nlohmann::json(std::string(name_of(r.assessment->chosen))) : nlohmann::json(nullptr);
    return j;
}

struct ClassifyOptions {
    std::int64_t window_ms{kDefaultWindowMs};
    std::int64_t hop_ms{kDefaultHopMs};
};

struct ClassifySummary {
    std::size_t accepted{0};
    std::size_t dropped{0};
    std::size_t windows{0};
};

// Output is only written once the whole input has been processed.
inline ClassifySummary classify(const ClassifyOptions& o, std::istream& csv, std::ostream& out) {
    if (o.window_ms <= 0 || o.hop_ms <= 0) throw UsageError("window and hop must be positive");
    const auto rows = read_rr_csv(csv);
    std::map<std::string, PersonPipeline> people;
    std::vector<WindowResult> results;
    ClassifySummary s;
    for (const auto& row : rows) {
        auto it = people.find(row.person_id);
        if (it == people.end()) it = people.emplace(row.person_id, PersonPipeline(row.person_id, o.window_ms, o.hop_ms)).first;
        auto outcome = it->second.push(row.sample);
        if (outcome.accepted) ++s.accepted;
        else ++s.dropped;
        for (auto& r : outcome.closed) results.push_back(std::move(r));
    }
    if (s.accepted == 0)
        throw DataError("no RR samples left after filtering (" + std::to_string(s.dropped) + " dropped)");
    std::ostringstream buf;
    for (const auto& r : results) buf << to_json(r).dump() << '\n';
    out << buf.str();
    s.windows = results.size();
    return s;
}

// ---------------------------------------------------------------------------

inline void normalize(std::istream& in, std::ostream& out, std::ostream& warnings) {
    CountMatrix counts;
    try {
        counts = read_counts_csv(in);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    NormalizedConfusion n;
    try {
        n = normalize_confusion(counts);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    for (Emotion e : n.zero_columns) warnings << "warning: column '" << name_of(e) << "' has no responses\n";
    write_matrix_csv(out, n.values);
}

}  // namespace heartbees::cli
