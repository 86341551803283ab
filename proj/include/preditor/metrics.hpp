// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hand-crafted stand-ins for the usual edit metrics: CLIP-style relevance in
// the joint space, a multi-scale patch-normalised perceptual distance, and a
// structure distance between gradient-orientation self-similarity matrices.

#include <algorithm>
#include <numbers>

#include "preditor/space.hpp"

namespace preditor {

inline double relevance_score(const JointEmbeddingSpace& space, const ConceptEmbedding& z, const ToyPrompt& prompt) {
    return cosine(z, embed_text(space, prompt));
}

inline double relevance_score(const JointEmbeddingSpace& space, const ImageGrid& image, const ToyPrompt& prompt) {
    return relevance_score(space, embed_image(space, image), prompt);
}

namespace detail {

inline void require_same_shape(const ImageGrid& x, const ImageGrid& y, const char* what) {
    if (!(x.shape == y.shape)) throw DimensionError(std::string(what) + ": image shapes differ");
}

/// 2x2 average pooling, per channel. Odd trailing rows/columns are dropped.
inline ImageGrid halve(const ImageGrid& img) {
    const GridShape s{img.shape.height / 2, img.shape.width / 2, img.shape.channels};
    ImageGrid out(s);
    for (std::size_t r = 0; r < s.height; ++r)
        for (std::size_t c = 0; c < s.width; ++c)
            for (std::size_t ch = 0; ch < s.channels; ++ch)
                out.at(r, c, ch) = 0.25 * (img.at(2 * r, 2 * c, ch) + img.at(2 * r + 1, 2 * c, ch) +
                                           img.at(2 * r, 2 * c + 1, ch) + img.at(2 * r + 1, 2 * c + 1, ch));
    return out;
}

inline constexpr std::size_t kPatch = 4;
inline constexpr double kPatchVarianceFloor = 1e-2;

/// Mean over kPatch x kPatch tiles of
///   (mean_x - mean_y)^2 + mean_i ((x_i - mean_x)/sqrt(var_x + k) - (y_i - mean_y)/sqrt(var_y + k))^2.
/// Grids smaller than a tile are treated as a single tile.
inline double patch_distance(const ImageGrid& x, const ImageGrid& y) {
    const std::size_t ph = std::min(kPatch, x.shape.height);
    const std::size_t pw = std::min(kPatch, x.shape.width);
    const double n = static_cast<double>(ph * pw);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t ch = 0; ch < x.shape.channels; ++ch) {
        for (std::size_t r0 = 0; r0 + ph <= x.shape.height; r0 += ph) {
            for (std::size_t c0 = 0; c0 + pw <= x.shape.width; c0 += pw) {
                double mx = 0.0, my = 0.0;
                for (std::size_t r = r0; r < r0 + ph; ++r)
                    for (std::size_t c = c0; c < c0 + pw; ++c) {
                        mx += x.at(r, c, ch);
                        my += y.at(r, c, ch);
                    }
                mx /= n;
                my /= n;
                double vx = 0.0, vy = 0.0;
                for (std::size_t r = r0; r < r0 + ph; ++r)
                    for (std::size_t c = c0; c < c0 + pw; ++c) {
                        vx += (x.at(r, c, ch) - mx) * (x.at(r, c, ch) - mx);
                        vy += (y.at(r, c, ch) - my) * (y.at(r, c, ch) - my);
                    }
                const double sx = std::sqrt(vx / n + kPatchVarianceFloor);
                const double sy = std::sqrt(vy / n + kPatchVarianceFloor);
                double shape_term = 0.0;
                for (std::size_t r = r0; r < r0 + ph; ++r)
                    for (std::size_t c = c0; c < c0 + pw; ++c) {
                        const double d = (x.at(r, c, ch) - mx) / sx - (y.at(r, c, ch) - my) / sy;
                        shape_term += d * d;
                    }
                total += (mx - my) * (mx - my) + shape_term / n;
                ++count;
            }
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace detail

/// Perceptual distance proxy averaged over scales 1, 1/2 and 1/4. Zero iff x == y.
inline double lpips_proxy(const ImageGrid& x, const ImageGrid& y) {
    detail::require_same_shape(x, y, "lpips_proxy");
    ImageGrid a = x, b = y;
    double total = 0.0;
    int scales = 0;
    for (int level = 0; level < 3; ++level) {
        if (a.shape.height == 0 || a.shape.width == 0) break;
        total += detail::patch_distance(a, b);
        ++scales;
        if (level < 2) {
            a = detail::halve(a);
            b = detail::halve(b);
        }
    }
    return total / scales;
}

/// 1 - lpips_proxy; higher means closer to the reference.
inline double fidelity_lpips(const ImageGrid& x, const ImageGrid& y) { return 1.0 - lpips_proxy(x, y); }

namespace detail {

inline constexpr std::size_t kCell = 4;
inline constexpr int kOrientationBins = 16;
inline constexpr double kCellSigma = 2.0;

/// Magnitude-weighted signed orientation histograms for a grid of kCell x kCell
/// cells. Every pixel votes into every cell with a Gaussian weight (sigma
/// kCellSigma) on its distance to the cell centre, so a one-pixel shift moves
/// votes smoothly instead of across hard cell borders. Central differences
/// with replicated borders; linear interpolation between orientation bins.
/// Channels are averaged first.
inline std::vector<Vector> orientation_histograms(const ImageGrid& img) {
    const std::size_t h = img.shape.height, w = img.shape.width, chs = img.shape.channels;
    auto gray = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
        r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(h) - 1);
        c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(w) - 1);
        double v = 0.0;
        for (std::size_t ch = 0; ch < chs; ++ch) v += img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
        return v / static_cast<double>(chs);
    };
    const std::size_t rows = std::max<std::size_t>(1, h / kCell);
    const std::size_t cols = std::max<std::size_t>(1, w / kCell);
    std::vector<Vector> cells(rows * cols, Vector(kOrientationBins, 0.0));
    const double bin_width = 2.0 * std::numbers::pi / kOrientationBins;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const auto ri = static_cast<std::ptrdiff_t>(r), ci = static_cast<std::ptrdiff_t>(c);
            const double gx = 0.5 * (gray(ri, ci + 1) - gray(ri, ci - 1));
            const double gy = 0.5 * (gray(ri + 1, ci) - gray(ri - 1, ci));
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0) continue;
            double pos = std::atan2(gy, gx) / bin_width;
            if (pos < 0.0) pos += kOrientationBins;
            const double lower = std::floor(pos);
            const double frac = pos - lower;
            const auto b0 = static_cast<std::size_t>(static_cast<int>(lower) % kOrientationBins);
            const auto b1 = (b0 + 1) % kOrientationBins;
            for (std::size_t cr = 0; cr < rows; ++cr) {
                for (std::size_t cc = 0; cc < cols; ++cc) {
                    const double dy = static_cast<double>(r) - (static_cast<double>(cr) + 0.5) * kCell + 0.5;
                    const double dx = static_cast<double>(c) - (static_cast<double>(cc) + 0.5) * kCell + 0.5;
                    const double wgt = mag * std::exp(-(dx * dx + dy * dy) / (2.0 * kCellSigma * kCellSigma));
                    Vector& hist = cells[cr * cols + cc];
                    hist[b0] += wgt * (1.0 - frac);
                    hist[b1] += wgt * frac;
                }
            }
        }
    }
    return cells;
}

}  // namespace detail

/// Cell-to-cell cosine matrix of the orientation histograms (all zero for an
/// image without gradients).
inline std::vector<double> self_similarity(const ImageGrid& img) {
    const auto cells = detail::orientation_histograms(img);
    const std::size_t n = cells.size();
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = cosine(cells[i], cells[j]);
    return m;
}

/// Mean squared difference between the two self-similarity matrices.
inline double structural_distance(const ImageGrid& x, const ImageGrid& y) {
    detail::require_same_shape(x, y, "structural_distance");
    const auto a = self_similarity(x);
    const auto b = self_similarity(y);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
    return total / static_cast<double>(a.size());
}

/// Ranks starting at 1; ties share their average rank.
inline Vector average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    Vector ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks); 0 when
/// either input is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    require_same_dim(x.size(), y.size(), "spearman");
    if (x.size() < 2) throw RangeError("spearman needs at least two points");
    const Vector rx = average_ranks(x), ry = average_ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace preditor
