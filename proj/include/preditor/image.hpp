// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "preditor/common.hpp"

namespace preditor {

struct GridShape {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 1;

    std::size_t size() const { return height * width * channels; }
    bool operator==(const GridShape&) const = default;
};

/// Row-major H x W x C grid. Values are only clamped to [0, 1] at output boundaries.
struct ImageGrid {
    GridShape shape;
    Vector values;

    ImageGrid() = default;
    explicit ImageGrid(GridShape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
    ImageGrid(GridShape s, Vector v) : shape(s), values(std::move(v)) {
        require_same_dim(values.size(), shape.size(), "ImageGrid");
    }

    double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
        return values[(r * shape.width + c) * shape.channels + ch];
    }
    double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
        return values[(r * shape.width + c) * shape.channels + ch];
    }

    ImageGrid clamped() const {
        ImageGrid out = *this;
        for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
        return out;
    }

    bool operator==(const ImageGrid&) const = default;
};

/// Binary spatial mask; 1 (white) marks editable pixels.
struct EditMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    EditMask() = default;
    EditMask(std::size_t h, std::size_t w, std::uint8_t fill) : height(h), width(w), values(h * w, fill) {
        if (fill > 1) throw RangeError("mask values must be 0 or 1");
    }

    std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * width + c]; }

    void check_matches(const GridShape& s) const {
        if (height != s.height || width != s.width) throw DimensionError("mask shape does not match image");
        for (auto v : values) {
            if (v > 1) throw RangeError("mask values must be 0 or 1");
        }
    }
};

namespace detail {

inline std::string next_token(std::istream& is) {
    std::string tok;
    char ch;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string ignored;
            std::getline(is, ignored);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

inline std::size_t parse_header_int(std::istream& is, const std::string& what) {
    const std::string tok = next_token(is);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw ParseError(what, "bad netpbm header field '" + tok + "'");
    return v;
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Binary 8-bit PGM (P5) or PPM (P6) depending on channel count.
inline void write_netpbm(const ImageGrid& img, const std::string& path) {
    if (img.shape.channels != 1 && img.shape.channels != 3) throw DimensionError("netpbm needs 1 or 3 channels");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << (img.shape.channels == 1 ? "P5" : "P6") << '\n' << img.shape.width << ' ' << img.shape.height << "\n255\n";
    for (double v : img.values) os.put(static_cast<char>(detail::to_byte(v)));
    if (!os) throw Error("failed writing " + path);
}

inline ImageGrid read_netpbm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open image " + path);
    const std::string magic = detail::next_token(is);
    std::size_t channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw ParseError("", path + ": expected binary PGM (P5) or PPM (P6)");
    const std::size_t w = detail::parse_header_int(is, "width");
    const std::size_t h = detail::parse_header_int(is, "height");
    const std::size_t maxval = detail::parse_header_int(is, "maxval");
    if (maxval != 255) throw ParseError("maxval", path + ": only 8-bit images are supported");
    ImageGrid img(GridShape{h, w, channels});
    for (double& v : img.values) {
        char byte;
        if (!is.get(byte)) throw ParseError("", path + ": truncated pixel data");
        v = static_cast<double>(static_cast<unsigned char>(byte)) / 255.0;
    }
    return img;
}

/// Masks are PGM files thresholded at 128 (>= 128 is editable).
inline EditMask read_mask(const std::string& path) {
    const ImageGrid img = read_netpbm(path);
    if (img.shape.channels != 1) throw ParseError("", path + ": mask must be grayscale");
    EditMask m(img.shape.height, img.shape.width, 0);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = std::lround(img.values[i] * 255.0) >= 128 ? 1 : 0;
    return m;
}

inline void write_mask(const EditMask& m, const std::string& path) {
    ImageGrid img(GridShape{m.height, m.width, 1});
    for (std::size_t i = 0; i < m.values.size(); ++i) img.values[i] = m.values[i] ? 1.0 : 0.0;
    write_netpbm(img, path);
}

/// Exact-precision CSV dump: header "row,col,channel,value", values in %.17g.
inline void write_grid_csv(const ImageGrid& img, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << "row,col,channel,value\n" << std::setprecision(17);
    for (std::size_t r = 0; r < img.shape.height; ++r)
        for (std::size_t c = 0; c < img.shape.width; ++c)
            for (std::size_t ch = 0; ch < img.shape.channels; ++ch) os << r << ',' << c << ',' << ch << ',' << img.at(r, c, ch) << '\n';
}

inline ImageGrid read_grid_csv(const std::string& path, GridShape shape) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    std::string line;
    std::getline(is, line);
    if (line != "row,col,channel,value") throw ParseError("header", path + ": unexpected CSV header");
    ImageGrid img(shape);
    std::size_t count = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t r, c, ch;
        char comma;
        double v;
        if (!(ls >> r >> comma >> c >> comma >> ch >> comma >> v)) throw ParseError("", path + ": malformed row '" + line + "'");
        if (r >= shape.height || c >= shape.width || ch >= shape.channels) throw DimensionError(path + ": index out of shape");
        img.at(r, c, ch) = v;
        ++count;
    }
    require_same_dim(count, shape.size(), "grid CSV entries");
    return img;
}

}  // namespace preditor
