#pragma once

// Deterministic 2D Boids on a torus.
//
// Forces are velocity increments per step:
//   separation  sum over close neighbours of (x_i - x_j) / d^2
//   alignment   mean(v_j) - v_i
//   cohesion    centroid(x_j) - x_i
// All displacements use the toroidal metric and every force is read from the
// pre-step snapshot, so the order in which boids are updated only matters for
// random-number consumption (coincident separation pairs).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "heartbees/vec2.hpp"

namespace heartbees {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Bounds {
    double width{800.0};
    double height{600.0};

    friend bool operator==(const Bounds&, const Bounds&) = default;
};

inline void validate_bounds(const Bounds& b) {
    if (!std::isfinite(b.width) || !std::isfinite(b.height) || b.width <= 0.0 || b.height <= 0.0)
        throw std::invalid_argument("bounds: width and height must be finite and positive");
}

struct FlockConfig {
    double separation{0.05};        // S
    double alignment{0.05};         // M
    double cohesion{0.05};          // K
    double perception_range{60.0};  // R
    double separation_range{30.0};  // r
    double max_speed{2.0};          // V
    std::size_t flock_size{100};    // N

    friend bool operator==(const FlockConfig&, const FlockConfig&) = default;

    // Empty when valid, otherwise one message per offending field.
    [[nodiscard]] std::vector<std::string> violations() const {
        std::vector<std::string> out;
        auto non_negative = [&](double v, const char* name) {
            if (!std::isfinite(v) || v < 0.0) out.push_back(std::string(name) + ": must be finite and >= 0");
        };
        non_negative(separation, "separation");
        non_negative(alignment, "alignment");
        non_negative(cohesion, "cohesion");
        non_negative(perception_range, "perception_range");
        non_negative(separation_range, "separation_range");
        if (!std::isfinite(max_speed) || max_speed <= 0.0) out.push_back("max_speed: must be finite and > 0");
        if (flock_size < 1) out.push_back("flock_size: must be >= 1");
        return out;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid flock config:";
        for (const auto& s : v) msg += " " + s + ";";
        throw std::invalid_argument(msg);
    }
};

struct BoidState {
    Vec2 position;
    Vec2 velocity;

    friend bool operator==(const BoidState&, const BoidState&) = default;
};

using Rng = std::mt19937_64;

struct FlockState {
    std::vector<BoidState> boids;
    std::uint64_t tick{0};
    Rng rng;
    Bounds bounds;

    friend bool operator==(const FlockState&, const FlockState&) = default;
};

// [0, 1) with 53 random bits; independent of the standard library's
// distribution implementations so streams are identical across toolchains.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Vec2 random_unit(Rng& rng) {
    const double angle = 2.0 * std::numbers::pi * uniform01(rng);
    return {std::cos(angle), std::sin(angle)};
}

inline double wrap_coordinate(double x, double extent) {
    double w = std::fmod(x, extent);
    if (w < 0.0) w += extent;
    if (w >= extent) w = 0.0;
    return w;
}

inline Vec2 wrap_position(Vec2 p, const Bounds& b) {
    return {wrap_coordinate(p.x, b.width), wrap_coordinate(p.y, b.height)};
}

// Shortest displacement from `from` to `to` on the torus.
inline Vec2 torus_delta(const Vec2& from, const Vec2& to, const Bounds& b) {
    Vec2 d = to - from;
    const double hw = 0.5 * b.width;
    const double hh = 0.5 * b.height;
    if (d.x > hw) d.x -= b.width;
    else if (d.x < -hw) d.x += b.width;
    if (d.y > hh) d.y -= b.height;
    else if (d.y < -hh) d.y += b.height;
    return d;
}

inline FlockState init_flock(const FlockConfig& config, const Bounds& bounds, std::uint64_t seed) {
    config.validate();
    validate_bounds(bounds);
    FlockState s;
    s.bounds = bounds;
    s.rng.seed(seed);
    s.boids.reserve(config.flock_size);
    const double speed = 0.5 * config.max_speed;
    for (std::size_t i = 0; i < config.flock_size; ++i) {
        BoidState b;
        const double ux = uniform01(s.rng);
        const double uy = uniform01(s.rng);
        b.position = wrap_position({ux * bounds.width, uy * bounds.height}, bounds);
        b.velocity = random_unit(s.rng) * speed;
        s.boids.push_back(b);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Neighbour search

// Uniform bucket grid over the torus, stored as a CSR cell -> boid index list.
class SpatialGrid {
public:
    SpatialGrid(std::span<const BoidState> boids, const Bounds& bounds, double cell_size)
        : bounds_(bounds) {
        const double cell = cell_size > 0.0 ? cell_size : std::max(bounds.width, bounds.height);
        cols_ = std::max<std::size_t>(1, static_cast<std::size_t>(bounds.width / cell));
        rows_ = std::max<std::size_t>(1, static_cast<std::size_t>(bounds.height / cell));
        cell_w_ = bounds.width / static_cast<double>(cols_);
        cell_h_ = bounds.height / static_cast<double>(rows_);

        std::vector<std::size_t> cell_of(boids.size());
        starts_.assign(cols_ * rows_ + 1, 0);
        for (std::size_t i = 0; i < boids.size(); ++i) {
            cell_of[i] = cell_index(boids[i].position);
            ++starts_[cell_of[i] + 1];
        }
        for (std::size_t c = 1; c < starts_.size(); ++c) starts_[c] += starts_[c - 1];
        items_.resize(boids.size());
        std::vector<std::size_t> fill(starts_.begin(), starts_.end() - 1);
        for (std::size_t i = 0; i < boids.size(); ++i) items_[fill[cell_of[i]]++] = i;
    }

    // Appends every j != i with torus distance <= radius, ascending.
    void query(std::span<const BoidState> boids, std::size_t i, double radius,
               std::vector<std::size_t>& out) const {
        out.clear();
        if (radius <= 0.0) return;
        const Vec2 p = boids[i].position;
        const double r2 = radius * radius;
        const auto col = column_of(p.x);
        const auto row = row_of(p.y);
        const auto kx = static_cast<std::size_t>(std::ceil(radius / cell_w_));
        const auto ky = static_cast<std::size_t>(std::ceil(radius / cell_h_));

        auto visit_cell = [&](std::size_t c, std::size_t r) {
            const std::size_t cell = r * cols_ + c;
            for (std::size_t k = starts_[cell]; k < starts_[cell + 1]; ++k) {
                const std::size_t j = items_[k];
                if (j == i) continue;
                if (torus_delta(p, boids[j].position, bounds_).norm_sq() <= r2) out.push_back(j);
            }
        };
        auto for_each_offset = [](std::size_t center, std::size_t k, std::size_t n, auto&& fn) {
            if (2 * k + 1 >= n) {
                for (std::size_t c = 0; c < n; ++c) fn(c);
            } else {
                for (std::size_t d = 0; d <= 2 * k; ++d) fn((center + n - k + d) % n);
            }
        };
        for_each_offset(row, ky, rows_, [&](std::size_t r) {
            for_each_offset(col, kx, cols_, [&](std::size_t c) { visit_cell(c, r); });
        });
        std::sort(out.begin(), out.end());
    }

private:
    [[nodiscard]] std::size_t column_of(double x) const {
        return std::min(cols_ - 1, static_cast<std::size_t>(x / cell_w_));
    }
    [[nodiscard]] std::size_t row_of(double y) const {
        return std::min(rows_ - 1, static_cast<std::size_t>(y / cell_h_));
    }
    [[nodiscard]] std::size_t cell_index(const Vec2& p) const { return row_of(p.y) * cols_ + column_of(p.x); }

    Bounds bounds_;
    std::size_t cols_{1};
    std::size_t rows_{1};
    double cell_w_{1.0};
    double cell_h_{1.0};
    std::vector<std::size_t> starts_;
    std::vector<std::size_t> items_;
};

// O(N) scan; kept as the baseline strategy for benchmarking the grid.
struct AllPairsSearch {
    AllPairsSearch(std::span<const BoidState>, const Bounds& bounds, double) : bounds_(bounds) {}

    void query(std::span<const BoidState> boids, std::size_t i, double radius,
               std::vector<std::size_t>& out) const {
        out.clear();
        if (radius <= 0.0) return;
        const double r2 = radius * radius;
        for (std::size_t j = 0; j < boids.size(); ++j) {
            if (j != i && torus_delta(boids[i].position, boids[j].position, bounds_).norm_sq() <= r2)
                out.push_back(j);
        }
    }

private:
    Bounds bounds_;
};

// A radius of zero disables the interaction and returns no neighbours.
inline std::vector<std::size_t> neighbors(const FlockState& state, std::size_t i, double radius) {
    if (i >= state.boids.size()) throw std::out_of_range("neighbors: boid index out of range");
    if (!(radius >= 0.0)) throw std::invalid_argument("neighbors: radius must be >= 0");
    std::vector<std::size_t> out;
    if (radius == 0.0) return out;
    SpatialGrid grid(state.boids, state.bounds, radius);
    grid.query(state.boids, i, radius, out);
    return out;
}

// ---------------------------------------------------------------------------
// Steering rules

inline Vec2 separation_force(const BoidState& self, std::span<const BoidState> close, const Bounds& bounds,
                             Rng& rng) {
    Vec2 f;
    for (const auto& n : close) {
        const Vec2 away = torus_delta(n.position, self.position, bounds);
        const double d2 = away.norm_sq();
        if (d2 == 0.0) {
            f += random_unit(rng);
        } else {
            f += away / d2;
        }
    }
    return f;
}

inline Vec2 alignment_force(const BoidState& self, std::span<const BoidState> perceived) {
    if (perceived.empty()) return {};
    Vec2 sum;
    for (const auto& n : perceived) sum += n.velocity;
    return sum / static_cast<double>(perceived.size()) - self.velocity;
}

inline Vec2 cohesion_force(const BoidState& self, std::span<const BoidState> perceived, const Bounds& bounds) {
    if (perceived.empty()) return {};
    // Centroid of toroidal offsets, so a neighbourhood straddling the seam is not torn apart.
    Vec2 sum;
    for (const auto& n : perceived) sum += torus_delta(self.position, n.position, bounds);
    return sum / static_cast<double>(perceived.size());
}

inline Vec2 clamp_velocity(Vec2 v, double max_speed) {
    const double n = v.norm();
    if (n <= max_speed || n == 0.0) return v;
    return v * (max_speed / n);
}

template <class Search = SpatialGrid>
FlockState step(const FlockState& state, const FlockConfig& config, double dt = 1.0) {
    if (state.boids.size() != config.flock_size)
        throw std::invalid_argument("step: flock size does not match config");
    FlockState next = state;
    const std::span<const BoidState> snapshot(state.boids);
    const double R = config.perception_range;
    const double r = config.separation_range;
    const double query_radius = std::max(R, r);
    const bool interacting = query_radius > 0.0 && snapshot.size() > 1;

    std::vector<std::size_t> found;
    std::vector<BoidState> close;
    std::vector<BoidState> perceived;
    if (interacting) {
        const Search search(snapshot, state.bounds, query_radius);
        for (std::size_t i = 0; i < snapshot.size(); ++i) {
            const BoidState& self = snapshot[i];
            search.query(snapshot, i, query_radius, found);
            close.clear();
            perceived.clear();
            for (std::size_t j : found) {
                const double d2 = torus_delta(self.position, snapshot[j].position, state.bounds).norm_sq();
                if (r > 0.0 && d2 <= r * r) close.push_back(snapshot[j]);
                if (R > 0.0 && d2 <= R * R) perceived.push_back(snapshot[j]);
            }
            Vec2 v = self.velocity;
            v += config.separation * separation_force(self, close, state.bounds, next.rng);
            v += config.alignment * alignment_force(self, perceived);
            v += config.cohesion * cohesion_force(self, perceived, state.bounds);
            next.boids[i].velocity = clamp_velocity(v, config.max_speed);
        }
    } else {
        for (std::size_t i = 0; i < snapshot.size(); ++i)
            next.boids[i].velocity = clamp_velocity(snapshot[i].velocity, config.max_speed);
    }

    for (std::size_t i = 0; i < next.boids.size(); ++i) {
        auto& b = next.boids[i];
        b.position = wrap_position(b.position + b.velocity * dt, state.bounds);
        if (!b.velocity.finite() || !b.position.finite())
            throw SimulationError("step: non-finite state for boid " + std::to_string(i) + " at tick " +
                                  std::to_string(state.tick));
    }
    ++next.tick;
    return next;
}

// Grows or shrinks a flock to `n` boids; new boids are drawn like init_flock.
inline void resize_flock(FlockState& state, std::size_t n, double max_speed) {
    if (n < state.boids.size()) {
        state.boids.resize(n);
        return;
    }
    while (state.boids.size() < n) {
        BoidState b;
        const double ux = uniform01(state.rng);
        const double uy = uniform01(state.rng);
        b.position = wrap_position({ux * state.bounds.width, uy * state.bounds.height}, state.bounds);
        b.velocity = random_unit(state.rng) * (0.5 * max_speed);
        state.boids.push_back(b);
    }
}

}  // namespace heartbees
