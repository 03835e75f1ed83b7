#pragma once

// Newline-delimited trajectory records:
//   {"tick":T,"bounds":[W,H],"boids":[[x,y,vx,vy],...]}
// Doubles are written as the shortest decimal that round-trips, so reading a
// record back reproduces the stored state bit for bit.

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "heartbees/flock.hpp"

namespace heartbees {

struct TrajectoryRecord {
    std::uint64_t tick{0};
    Bounds bounds;
    std::vector<BoidState> boids;

    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

class TrajectoryParseError : public std::runtime_error {
public:
    TrajectoryParseError(std::size_t line, const std::string& what)
        : std::runtime_error("trajectory line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline TrajectoryRecord to_record(const FlockState& s) {
    return {s.tick, s.bounds, s.boids};
}

inline std::string encode_record(const TrajectoryRecord& rec) {
    nlohmann::ordered_json boids = nlohmann::ordered_json::array();
    for (const auto& b : rec.boids)
        boids.push_back({b.position.x, b.position.y, b.velocity.x, b.velocity.y});
    nlohmann::ordered_json j;
    j["tick"] = rec.tick;
    j["bounds"] = {rec.bounds.width, rec.bounds.height};
    j["boids"] = std::move(boids);
    return j.dump();
}

inline TrajectoryRecord decode_record(const std::string& line, std::size_t line_no = 1) {
    try {
        const auto j = nlohmann::json::parse(line);
        TrajectoryRecord rec;
        rec.tick = j.at("tick").get<std::uint64_t>();
        const auto& b = j.at("bounds");
        if (!b.is_array() || b.size() != 2) throw TrajectoryParseError(line_no, "bounds must be [width,height]");
        rec.bounds = {b[0].get<double>(), b[1].get<double>()};
        validate_bounds(rec.bounds);
        for (const auto& e : j.at("boids")) {
            if (!e.is_array() || e.size() != 4) throw TrajectoryParseError(line_no, "boid entry must be [x,y,vx,vy]");
            rec.boids.push_back({{e[0].get<double>(), e[1].get<double>()}, {e[2].get<double>(), e[3].get<double>()}});
        }
        return rec;
    } catch (const TrajectoryParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw TrajectoryParseError(line_no, e.what());
    }
}

inline void write_record(std::ostream& out, const TrajectoryRecord& rec) {
    out << encode_record(rec) << '\n';
}

// Blank lines are skipped; any other malformed line reports its 1-based number.
inline std::vector<TrajectoryRecord> read_trajectory(std::istream& in) {
    std::vector<TrajectoryRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(decode_record(line, n));
    }
    return out;
}

}  // namespace heartbees
