#pragma once

// Headless trail renderer. Integer rasterisation and integer alpha blending
// only, so frames are bit-identical across platforms.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "heartbees/flock.hpp"

namespace heartbees {

enum class Background { Dark, Bright };
enum class Palette { Warm, Cold, Mixed };

inline constexpr int kPersistentStrokeLength = 100;

struct Aesthetics {
    int stroke_length{10};  // 0..100; 100 keeps every trail point
    int stroke_width{3};    // pixels
    Background background{Background::Dark};
    Palette palette{Palette::Warm};

    friend bool operator==(const Aesthetics&, const Aesthetics&) = default;

    [[nodiscard]] std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (stroke_length < 0 || stroke_length > kPersistentStrokeLength)
            out.emplace_back("stroke_length: must be in [0, 100]");
        if (stroke_width < 1) out.emplace_back("stroke_width: must be >= 1");
        return out;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid aesthetics:";
        for (const auto& s : v) msg += " " + s + ";";
        throw std::invalid_argument(msg);
    }
};

inline constexpr std::string_view name_of(Background b) { return b == Background::Dark ? "dark" : "bright"; }

inline constexpr std::string_view name_of(Palette p) {
    switch (p) {
        case Palette::Warm: return "warm";
        case Palette::Cold: return "cold";
        case Palette::Mixed: return "mixed";
    }
    return "?";
}

namespace detail {

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace detail

inline Background parse_background(std::string_view raw) {
    const auto s = detail::lowercase(raw);
    if (s == "dark") return Background::Dark;
    if (s == "bright") return Background::Bright;
    throw std::invalid_argument("background must be 'dark' or 'bright', got '" + std::string(raw) + "'");
}

inline Palette parse_palette(std::string_view raw) {
    const auto s = detail::lowercase(raw);
    if (s == "warm") return Palette::Warm;
    if (s == "cold") return Palette::Cold;
    if (s == "mixed") return Palette::Mixed;
    throw std::invalid_argument("palette must be 'warm', 'cold' or 'mixed', got '" + std::string(raw) + "'");
}

struct Rgb8 {
    std::uint8_t r{0}, g{0}, b{0};

    friend constexpr bool operator==(const Rgb8&, const Rgb8&) = default;
};

inline constexpr Rgb8 hex_rgb(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

inline constexpr Rgb8 kDarkBackground = hex_rgb(0x14213D);
inline constexpr Rgb8 kBrightBackground = hex_rgb(0xF1F3F5);

// orange, red, yellow
inline constexpr std::array<Rgb8, 3> kWarmColors{hex_rgb(0xFF8C00), hex_rgb(0xE03131), hex_rgb(0xFFD43B)};
// green, blue, indigo, violet
inline constexpr std::array<Rgb8, 4> kColdColors{hex_rgb(0x2F9E44), hex_rgb(0x1971C2), hex_rgb(0x4263EB),
                                                 hex_rgb(0x7048E8)};

inline constexpr Rgb8 background_color(Background b) {
    return b == Background::Dark ? kDarkBackground : kBrightBackground;
}

inline constexpr Rgb8 palette_color(Palette p, std::size_t boid_index) {
    switch (p) {
        case Palette::Warm: return kWarmColors[boid_index % kWarmColors.size()];
        case Palette::Cold: return kColdColors[boid_index % kColdColors.size()];
        case Palette::Mixed: {
            const std::size_t k = boid_index % (kWarmColors.size() + kColdColors.size());
            return k < kWarmColors.size() ? kWarmColors[k] : kColdColors[k - kWarmColors.size()];
        }
    }
    return {};
}

// ---------------------------------------------------------------------------
// Trails

struct TrailPoint {
    Vec2 position;
    bool breaks_before{false};  // set when the boid wrapped around since the previous point

    friend bool operator==(const TrailPoint&, const TrailPoint&) = default;
};

class TrailBuffer {
public:
    TrailBuffer() = default;
    TrailBuffer(std::size_t boids, const Bounds& bounds) : bounds_(bounds), trails_(boids) {}

    [[nodiscard]] std::size_t boid_count() const { return trails_.size(); }
    [[nodiscard]] const Bounds& bounds() const { return bounds_; }
    [[nodiscard]] const std::deque<TrailPoint>& trail(std::size_t i) const { return trails_.at(i); }

    // Capacity in points; nullopt means unbounded.
    static std::optional<std::size_t> capacity(const Aesthetics& a) {
        if (a.stroke_length >= kPersistentStrokeLength) return std::nullopt;
        return static_cast<std::size_t>(std::max(0, a.stroke_length));
    }

    void update(std::span<const BoidState> boids, const Bounds& bounds, const Aesthetics& a) {
        if (trails_.empty() && !boids.empty()) {
            trails_.resize(boids.size());
            bounds_ = bounds;
        }
        if (boids.size() != trails_.size())
            throw std::invalid_argument("update_trails: boid count " + std::to_string(boids.size()) +
                                        " does not match trail buffer (" + std::to_string(trails_.size()) + ")");
        bounds_ = bounds;
        const auto cap = capacity(a);
        for (std::size_t i = 0; i < boids.size(); ++i) {
            auto& t = trails_[i];
            TrailPoint p{boids[i].position, false};
            if (!t.empty()) {
                const Vec2 d = p.position - t.back().position;
                p.breaks_before = std::abs(d.x) > 0.5 * bounds.width || std::abs(d.y) > 0.5 * bounds.height;
            }
            t.push_back(p);
            if (cap)
                while (t.size() > *cap) t.pop_front();
        }
    }

    void clear() {
        for (auto& t : trails_) t.clear();
    }

private:
    Bounds bounds_;
    std::vector<std::deque<TrailPoint>> trails_;
};

inline void update_trails(TrailBuffer& buffer, const FlockState& state, const Aesthetics& a) {
    buffer.update(state.boids, state.bounds, a);
}

// ---------------------------------------------------------------------------
// Raster

struct Frame {
    int width{0};
    int height{0};
    std::vector<std::uint8_t> pixels;  // row-major RGB8

    Frame() = default;
    Frame(int w, int h, Rgb8 fill) : width(w), height(h) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("frame size must be positive");
        pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
        for (std::size_t i = 0; i < pixels.size(); i += 3) {
            pixels[i] = fill.r;
            pixels[i + 1] = fill.g;
            pixels[i + 2] = fill.b;
        }
    }

    [[nodiscard]] Rgb8 at(int x, int y) const {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }

    // alpha in [0, 255]
    void blend(int x, int y, Rgb8 c, int alpha) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        auto mix = [alpha](int src, int dst) { return static_cast<std::uint8_t>((src * alpha + dst * (255 - alpha) + 127) / 255); };
        pixels[i] = mix(c.r, pixels[i]);
        pixels[i + 1] = mix(c.g, pixels[i + 1]);
        pixels[i + 2] = mix(c.b, pixels[i + 2]);
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

namespace detail {

struct Pixel {
    int x, y;
};

inline void stamp_square(Frame& f, Pixel c, int width, Rgb8 color, int alpha) {
    const int lo = -(width - 1) / 2;
    for (int dy = lo; dy < lo + width; ++dy)
        for (int dx = lo; dx < lo + width; ++dx) f.blend(c.x + dx, c.y + dy, color, alpha);
}

// Bresenham centre line, widened along the minor axis.
inline void draw_thick_line(Frame& f, Pixel a, Pixel b, int width, Rgb8 color, int alpha) {
    if (a.x == b.x && a.y == b.y) {
        stamp_square(f, a, width, color, alpha);
        return;
    }
    const int dx = std::abs(b.x - a.x);
    const int dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1;
    const int sy = a.y < b.y ? 1 : -1;
    const bool x_major = dx >= -dy;
    const int lo = -(width - 1) / 2;
    int err = dx + dy;
    int x = a.x;
    int y = a.y;
    for (;;) {
        for (int o = lo; o < lo + width; ++o) {
            if (x_major) f.blend(x, y + o, color, alpha);
            else f.blend(x + o, y, color, alpha);
        }
        if (x == b.x && y == b.y) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

inline int alpha_byte(double opacity) { return static_cast<int>(std::lround(opacity * 255.0)); }

}  // namespace detail

inline constexpr double kOldestOpacity = 0.1;

// Opacity of the segment ending at point `k` (1..n-1) of an n-point trail:
// newest segment opaque, oldest at 10%, linear in between.
inline double segment_opacity(std::size_t k, std::size_t n) {
    if (n <= 2) return 1.0;
    return kOldestOpacity + (1.0 - kOldestOpacity) * static_cast<double>(k - 1) / static_cast<double>(n - 2);
}

inline double point_opacity(std::size_t k, std::size_t n) {
    if (n <= 1) return 1.0;
    return kOldestOpacity + (1.0 - kOldestOpacity) * static_cast<double>(k) / static_cast<double>(n - 1);
}

inline Frame render_frame(const TrailBuffer& buffer, const Aesthetics& a, int width, int height) {
    a.validate();
    Frame f(width, height, background_color(a.background));
    const Bounds& wb = buffer.bounds();
    auto to_pixel = [&](const Vec2& p) {
        return detail::Pixel{static_cast<int>(std::floor(p.x * width / wb.width)),
                             static_cast<int>(std::floor(p.y * height / wb.height))};
    };
    for (std::size_t i = 0; i < buffer.boid_count(); ++i) {
        const auto& t = buffer.trail(i);
        const Rgb8 color = palette_color(a.palette, i);
        const std::size_t n = t.size();
        for (std::size_t k = 0; k < n; ++k) {
            const bool joined_prev = k > 0 && !t[k].breaks_before;
            const bool joined_next = k + 1 < n && !t[k + 1].breaks_before;
            if (joined_prev) {
                detail::draw_thick_line(f, to_pixel(t[k - 1].position), to_pixel(t[k].position), a.stroke_width,
                                        color, detail::alpha_byte(segment_opacity(k, n)));
            } else if (!joined_next) {
                detail::stamp_square(f, to_pixel(t[k].position), a.stroke_width, color,
                                     detail::alpha_byte(point_opacity(k, n)));
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255)

inline std::string encode_ppm(const Frame& f) {
    std::string out = "P6\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
    return out;
}

inline Frame decode_ppm(std::string_view bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() {
        skip_space();
        long v = 0;
        const std::size_t begin = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > std::numeric_limits<int>::max()) throw std::runtime_error("ppm: header value too large");
            ++pos;
        }
        if (pos == begin) throw std::runtime_error("ppm: malformed header");
        return static_cast<int>(v);
    };
    if (bytes.substr(0, 2) != "P6") throw std::runtime_error("ppm: not a P6 image");
    pos = 2;
    const int w = read_int();
    const int h = read_int();
    const int maxval = read_int();
    if (maxval != 255) throw std::runtime_error("ppm: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw std::runtime_error("ppm: malformed header");
    ++pos;
    Frame f(w, h, {});
    if (bytes.size() - pos != f.pixels.size()) throw std::runtime_error("ppm: payload size mismatch");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), f.pixels.begin());
    return f;
}

}  // namespace heartbees
