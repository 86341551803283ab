// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic renderable world: one disc or square per image.

#include <filesystem>
#include <fstream>
#include <numbers>

#include "preditor/image.hpp"
#include "preditor/prompt.hpp"
#include "preditor/rng.hpp"

namespace preditor {

enum class Shape { disc, square };
enum class Size { small, large };
enum class Tone { bright, dark };

inline constexpr double kBackground = 0.1;
inline constexpr double kBrightIntensity = 0.9;
inline constexpr double kDarkIntensity = 0.4;
inline constexpr double kSmallRadius = 2.5;
inline constexpr double kLargeRadius = 4.5;

inline Concept to_concept(Shape s) { return s == Shape::disc ? Concept::disc : Concept::square; }
inline Concept to_concept(Size s) { return s == Size::small ? Concept::small : Concept::large; }
inline Concept to_concept(Tone t) { return t == Tone::bright ? Concept::bright : Concept::dark; }

struct SceneFactors {
    Shape shape = Shape::disc;
    Size size = Size::large;
    Tone tone = Tone::bright;
    double row = 8.0;  // object centre in continuous grid coordinates
    double col = 8.0;

    double radius() const { return size == Size::small ? kSmallRadius : kLargeRadius; }

    /// Half extent of the object; squares have the area of the disc of the same size.
    double half_extent() const {
        return shape == Shape::disc ? radius() : radius() * std::sqrt(std::numbers::pi) / 2.0;
    }

    double intensity() const { return tone == Tone::bright ? kBrightIntensity : kDarkIntensity; }

    ToyPrompt prompt() const {
        ToyPrompt p;
        p.add(to_concept(shape)).add(to_concept(size)).add(to_concept(tone));
        return p;
    }

    bool fits(const GridShape& g) const {
        const double e = half_extent();
        return row - e >= 0.0 && col - e >= 0.0 && row + e <= static_cast<double>(g.height) &&
               col + e <= static_cast<double>(g.width);
    }

    bool operator==(const SceneFactors&) const = default;
};

inline std::string_view shape_name(Shape s) { return s == Shape::disc ? "disc" : "square"; }
inline std::string_view size_name(Size s) { return s == Size::small ? "small" : "large"; }
inline std::string_view tone_name(Tone t) { return t == Tone::bright ? "bright" : "dark"; }

/// Anti-aliased render by 4x4 supersampling; pixel (r, c) covers [r, r+1) x [c, c+1).
inline ImageGrid render(const SceneFactors& f, const GridShape& grid) {
    if (!f.fits(grid)) throw RangeError("scene object does not fit inside the grid");
    constexpr int kSub = 4;
    ImageGrid img(grid, kBackground);
    const double e = f.half_extent();
    const double tone = f.intensity();
    for (std::size_t r = 0; r < grid.height; ++r) {
        for (std::size_t c = 0; c < grid.width; ++c) {
            int inside = 0;
            for (int i = 0; i < kSub; ++i) {
                for (int j = 0; j < kSub; ++j) {
                    const double y = static_cast<double>(r) + (i + 0.5) / kSub - f.row;
                    const double x = static_cast<double>(c) + (j + 0.5) / kSub - f.col;
                    const bool hit = f.shape == Shape::disc ? (x * x + y * y <= e * e)
                                                            : (std::abs(x) <= e && std::abs(y) <= e);
                    inside += hit ? 1 : 0;
                }
            }
            const double coverage = static_cast<double>(inside) / (kSub * kSub);
            for (std::size_t ch = 0; ch < grid.channels; ++ch) {
                img.at(r, c, ch) = kBackground + coverage * (tone - kBackground);
            }
        }
    }
    return img;
}

struct DatasetItem {
    ImageGrid image;
    ToyPrompt prompt;
    SceneFactors factors;
};

/// Uniform factors; centres are the grid centre plus integer offsets in
/// [-position_jitter, position_jitter] on each axis.
inline std::vector<DatasetItem> generate_dataset(std::size_t n, std::uint64_t seed, const GridShape& grid,
                                                 int position_jitter = 2) {
    if (n < 1) throw RangeError("generate_dataset requires n >= 1");
    if (position_jitter < 0) throw RangeError("position jitter must be >= 0");
    CounterRng rng(seed, Stream::dataset);
    std::vector<DatasetItem> items;
    items.reserve(n);
    const auto span = static_cast<std::uint64_t>(2 * position_jitter + 1);
    for (std::size_t i = 0; i < n; ++i) {
        SceneFactors f;
        f.shape = rng.below(2) == 0 ? Shape::disc : Shape::square;
        f.size = rng.below(2) == 0 ? Size::small : Size::large;
        f.tone = rng.below(2) == 0 ? Tone::bright : Tone::dark;
        f.row = static_cast<double>(grid.height) / 2.0 + static_cast<double>(rng.below(span)) - position_jitter;
        f.col = static_cast<double>(grid.width) / 2.0 + static_cast<double>(rng.below(span)) - position_jitter;
        items.push_back(DatasetItem{render(f, grid), f.prompt(), f});
    }
    return items;
}

/// Writes img_NNNNN.pgm files plus manifest.csv (filename,shape,size,tone,row,col).
inline std::vector<std::string> export_dataset(const std::vector<DatasetItem>& items, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
    if (!manifest) throw Error("cannot write dataset manifest in " + dir.string());
    manifest << "filename,shape,size,tone,row,col\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
        write_netpbm(items[i].image, (dir / name).string());
        written.push_back((dir / name).string());
        const auto& f = items[i].factors;
        manifest << name << ',' << shape_name(f.shape) << ',' << size_name(f.size) << ',' << tone_name(f.tone) << ','
                 << f.row << ',' << f.col << '\n';
    }
    written.push_back((dir / "manifest.csv").string());
    return written;
}

}  // namespace preditor
