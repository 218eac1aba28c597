#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spn/error.hpp"
#include "spn/png_io.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Min-max normalizes the map and writes it as an 8-bit grayscale PNG at the
// map's resolution; a constant map renders as uniform mid-gray.
inline void emit_heatmap(const Grid& map, const std::filesystem::path& path) {
    if (map.size() == 0) throw InputError("emit_heatmap: empty map");
    if (!all_finite(map.v)) throw InputError("emit_heatmap: non-finite map value");

    double lo = map.v[0], hi = map.v[0];
    for (double x : map.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo;

    Image8 img;
    img.width = map.cols;
    img.height = map.rows;
    img.channels = 1;
    img.pixels.resize(map.size());
    for (std::size_t i = 0; i < map.v.size(); ++i) {
        const double t = span > 0.0 ? (map.v[i] - lo) / span : 0.5;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
    write_png(path, img);
}

// Raw map values as comma-separated text, one row per line, full precision.
inline void emit_csv(const Grid& map, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("emit_csv: cannot open " + path.string());
    char buf[40];
    for (std::size_t r = 0; r < map.rows; ++r) {
        for (std::size_t c = 0; c < map.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", map(r, c));
            f << buf;
            if (c + 1 < map.cols) f << ',';
        }
        f << '\n';
    }
    if (!f) throw IoError("emit_csv: write failed for " + path.string());
}

inline Grid load_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("load_csv: cannot open " + path.string());
    std::vector<Vec> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Vec row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError("load_csv: bad number '" + cell + "' in " + path.string());
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError("load_csv: ragged rows in " + path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("load_csv: empty file " + path.string());
    Grid g(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < g.cols; ++c) g(r, c) = rows[r][c];
    return g;
}

} // namespace spn
