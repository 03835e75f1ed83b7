#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace heartbees {

// 64-bit FNV-1a; stable across platforms, used for determinism fingerprints.
class Fnv1a {
public:
    void update(std::span<const std::uint8_t> bytes) {
        for (auto b : bytes) {
            h_ ^= b;
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) {
        update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    [[nodiscard]] std::uint64_t value() const { return h_; }
    [[nodiscard]] std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    std::uint64_t h_{0xcbf29ce484222325ULL};
};

inline std::uint64_t fnv1a(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.value();
}

}  // namespace heartbees
