#pragma once

// Confusion-matrix normalisation for perception studies: rows are the emotion
// a visualisation displayed, columns the emotion respondents associated with
// it. Each column is divided by its total.

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "heartbees/emotion.hpp"

namespace heartbees {

using CountMatrix = std::array<std::array<std::uint64_t, 8>, 8>;
using RealMatrix = std::array<std::array<double, 8>, 8>;

struct NormalizedConfusion {
    RealMatrix values{};
    std::vector<Emotion> zero_columns;  // columns with no responses; left as zeros
};

inline NormalizedConfusion normalize_confusion(const CountMatrix& counts) {
    NormalizedConfusion out;
    bool any = false;
    for (std::size_t j = 0; j < 8; ++j) {
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < 8; ++i) total += counts[i][j];
        if (total == 0) {
            out.zero_columns.push_back(kAllEmotions[j]);
            continue;
        }
        any = true;
        for (std::size_t i = 0; i < 8; ++i)
            out.values[i][j] = static_cast<double>(counts[i][j]) / static_cast<double>(total);
    }
    if (!any) throw std::invalid_argument("normalize_confusion: all counts are zero");
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace detail

// Header row: an empty corner cell then eight emotion names (any order, any
// case). Each further row: emotion name then eight non-negative integers.
inline CountMatrix read_counts_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("counts csv line " + std::to_string(line_no) + ": " + what);
    };
    std::array<std::size_t, 8> column_map{};
    bool have_header = false;
    std::array<bool, 8> seen_row{};
    CountMatrix counts{};
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 9) fail("expected 9 cells, got " + std::to_string(cells.size()));
        if (!have_header) {
            std::array<bool, 8> seen{};
            for (std::size_t j = 0; j < 8; ++j) {
                try {
                    column_map[j] = index_of(parse_emotion(cells[j + 1]));
                } catch (const std::exception& e) {
                    fail(e.what());
                }
                if (seen[column_map[j]]) fail("duplicate column " + cells[j + 1]);
                seen[column_map[j]] = true;
            }
            have_header = true;
            continue;
        }
        std::size_t row = 0;
        try {
            row = index_of(parse_emotion(cells[0]));
        } catch (const std::exception& e) {
            fail(e.what());
        }
        if (seen_row[row]) fail("duplicate row " + cells[0]);
        seen_row[row] = true;
        for (std::size_t j = 0; j < 8; ++j) {
            const auto& c = cells[j + 1];
            if (c.empty() || c.find_first_not_of("0123456789") != std::string::npos)
                fail("count '" + c + "' is not a non-negative integer");
            counts[row][column_map[j]] = std::stoull(c);
        }
    }
    if (!have_header) throw std::runtime_error("counts csv: missing header");
    for (std::size_t i = 0; i < 8; ++i)
        if (!seen_row[i]) throw std::runtime_error("counts csv: missing row " + std::string(name_of(kAllEmotions[i])));
    return counts;
}

inline void write_matrix_csv(std::ostream& out, const RealMatrix& m) {
    out << "displayed";
    for (Emotion e : kAllEmotions) out << ',' << name_of(e);
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < 8; ++i) {
        out << name_of(kAllEmotions[i]);
        for (std::size_t j = 0; j < 8; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m[i][j]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace heartbees
