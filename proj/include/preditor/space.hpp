// SPDX-License-Identifier: Apache-2.0
#pragma once

// Toy joint text/image embedding space. Concepts are orthonormal anchor
// directions; images are embedded through hand-crafted, translation-invariant
// features (fourth-moment cornerness, occupied area, object intensity).

#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>

#include "preditor/dataset.hpp"
#include "preditor/embedding.hpp"
#include "preditor/prompt.hpp"
#include "preditor/rng.hpp"

namespace preditor {

struct ImageFeatures {
    double presence = 0.0;    // 0 for a flat image, 1 once the object contrast is clear
    double cornerness = 0.0;  // diagonal / axis fourth-moment ratio: ~1 disc, ~4/3 square
    double area = 0.0;        // soft occupied pixel count
    double tone = 0.0;        // intensity of the object core
};

namespace detail {

/// Channel-averaged intensities plus median background and peak.
struct GrayView {
    Vector gray;
    double background = 0.0;
    double peak = 0.0;
};

inline GrayView gray_view(const ImageGrid& img) {
    const std::size_t n = img.shape.height * img.shape.width, ch = img.shape.channels;
    GrayView g;
    g.gray.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < ch; ++k) g.gray[i] += img.values[i * ch + k];
        g.gray[i] /= static_cast<double>(ch);
    }
    Vector sorted = g.gray;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    g.background = sorted[n / 2];
    g.peak = *std::max_element(g.gray.begin(), g.gray.end());
    return g;
}

/// Soft occupancy (x - background) / contrast clipped to [0, 1].
inline Vector soft_occupancy(const GrayView& g) {
    const double contrast = g.peak - g.background;
    Vector occ(g.gray.size(), 0.0);
    if (!(contrast > 0.0)) return occ;
    for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = std::clamp((g.gray[i] - g.background) / contrast, 0.0, 1.0);
    return occ;
}

}  // namespace detail

inline ImageFeatures image_features(const ImageGrid& img) {
    const std::size_t h = img.shape.height, w = img.shape.width;
    const auto g = detail::gray_view(img);
    const double contrast = g.peak - g.background;
    ImageFeatures f;
    f.presence = std::clamp(contrast / 0.1, 0.0, 1.0);
    if (!(contrast > 0.0)) return f;

    const Vector occ = detail::soft_occupancy(g);
    double mass = 0.0, mr = 0.0, mc = 0.0, w2 = 0.0, w2x = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double o = occ[r * w + c];
            mass += o;
            mr += o * static_cast<double>(r);
            mc += o * static_cast<double>(c);
            w2 += o * o;
            w2x += o * o * g.gray[r * w + c];
        }
    }
    mr /= mass;
    mc /= mass;
    double axis4 = 0.0, diag4 = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double o = occ[r * w + c];
            if (o == 0.0) continue;
            const double y = static_cast<double>(r) - mr, x = static_cast<double>(c) - mc;
            const double u = (x + y) * std::numbers::sqrt2 / 2.0, v = (x - y) * std::numbers::sqrt2 / 2.0;
            axis4 += o * (x * x * x * x + y * y * y * y);
            diag4 += o * (u * u * u * u + v * v * v * v);
        }
    }
    f.area = mass;
    f.tone = w2x / w2;
    f.cornerness = axis4 > 0.0 ? diag4 / axis4 : 1.0;
    return f;
}

/// Soft two-way decision tanh((value - mid) / scale).
struct FeatureCalibration {
    double mid = 0.0;
    double scale = 1.0;

    double signed_score(double value) const { return std::tanh((value - mid) / scale); }
};

/// Moment classifier used as an oracle on decoded images. It thresholds the
/// ratio E[max(|x|,|y|)^2] / E[x^2 + y^2] of the soft occupancy about its
/// centroid (3/4 for a square, 1/2 + 1/pi for a disc in the continuum), a
/// statistic the embedding projection does not use. Returns true for square.
inline bool classify_square(const ImageGrid& img, double threshold = 0.77);

/// Relative contribution of each attribute pair and the bias direction.
struct ProjectionWeights {
    double shape = 1.0;
    double size = 0.6;
    double tone = 0.6;
    double bias = 0.25;
};

class JointEmbeddingSpace {
public:
    using Weights = ProjectionWeights;

    JointEmbeddingSpace() = default;

    /// Anchors (and the bias direction) are an orthonormalised set of seeded
    /// Gaussian vectors, so distinct concepts are exactly orthogonal.
    JointEmbeddingSpace(std::size_t dim, std::uint64_t anchor_seed, GridShape grid, Weights weights = {})
        : dim_(dim), anchor_seed_(anchor_seed), grid_(grid), weights_(weights) {
        if (dim < kAllConcepts.size() + 1) throw RangeError("embedding dimension must be >= 7");
        std::vector<Vector> basis;
        for (std::size_t k = 0; k <= kAllConcepts.size(); ++k) {
            Vector v = counter_normal_vector(anchor_seed, Stream::anchors, k, dim);
            for (const auto& b : basis) {
                const double p = dot(v, b);
                for (std::size_t i = 0; i < dim; ++i) v[i] -= p * b[i];
            }
            const double n = l2_norm(v);
            for (double& x : v) x /= n;
            basis.push_back(std::move(v));
        }
        for (std::size_t k = 0; k < kAllConcepts.size(); ++k) anchors_[k] = basis[k];
        bias_ = basis.back();
        // Defaults match the canonical renders; calibrate() refines them on data.
        corner_ = {1.13, 0.08};
        area_ = {42.0, 11.0};
        tone_ = {0.63, 0.12};
    }

    std::size_t dim() const { return dim_; }
    std::uint64_t anchor_seed() const { return anchor_seed_; }
    const GridShape& grid() const { return grid_; }
    const Weights& weights() const { return weights_; }
    const FeatureCalibration& corner_calibration() const { return corner_; }
    const FeatureCalibration& area_calibration() const { return area_; }
    const FeatureCalibration& tone_calibration() const { return tone_; }

    const Vector& anchor(Concept c) const { return anchors_[static_cast<std::size_t>(c)]; }
    const Vector& bias_direction() const { return bias_; }

    ConceptEmbedding anchor_embedding(Concept c) const { return ConceptEmbedding{anchor(c), true}; }

    /// Midpoints between the class means of each raw feature; scales put the
    /// class means at tanh(+-2).
    void calibrate(const std::vector<DatasetItem>& items) {
        auto fit = [&](auto feature, auto is_second) {
            double s0 = 0, s1 = 0;
            std::size_t n0 = 0, n1 = 0;
            for (const auto& it : items) {
                const double v = feature(image_features(it.image));
                if (is_second(it.factors)) { s1 += v; ++n1; }
                else { s0 += v; ++n0; }
            }
            if (n0 == 0 || n1 == 0) throw RangeError("calibration set must contain both classes of each attribute");
            const double m0 = s0 / n0, m1 = s1 / n1;
            return FeatureCalibration{(m0 + m1) / 2.0, std::max(std::abs(m1 - m0) / 4.0, 1e-6)};
        };
        corner_ = fit([](const ImageFeatures& f) { return f.cornerness; }, [](const SceneFactors& f) { return f.shape == Shape::square; });
        area_ = fit([](const ImageFeatures& f) { return f.area; }, [](const SceneFactors& f) { return f.size == Size::large; });
        tone_ = fit([](const ImageFeatures& f) { return f.tone; }, [](const SceneFactors& f) { return f.tone == Tone::bright; });
    }

    void set_calibration(FeatureCalibration corner, FeatureCalibration area, FeatureCalibration tone) {
        corner_ = corner;
        area_ = area;
        tone_ = tone;
    }

    /// Unnormalised image projection: presence * sum_attr weight * (p_a e_a + p_b e_b) + bias.
    Vector project(const ImageFeatures& f) const {
        Vector z(dim_, 0.0);
        auto add_pair = [&](Concept first, Concept second, double p_second, double weight) {
            const double a = f.presence * weight * (1.0 - p_second);
            const double b = f.presence * weight * p_second;
            for (std::size_t i = 0; i < dim_; ++i) z[i] += a * anchor(first)[i] + b * anchor(second)[i];
        };
        add_pair(Concept::disc, Concept::square, 0.5 * (1.0 + corner_.signed_score(f.cornerness)), weights_.shape);
        add_pair(Concept::small, Concept::large, 0.5 * (1.0 + area_.signed_score(f.area)), weights_.size);
        add_pair(Concept::dark, Concept::bright, 0.5 * (1.0 + tone_.signed_score(f.tone)), weights_.tone);
        for (std::size_t i = 0; i < dim_; ++i) z[i] += weights_.bias * bias_[i];
        return z;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw Error("cannot write " + path);
        os << std::setprecision(17);
        os << "dim = " << dim_ << "\nanchor_seed = " << anchor_seed_ << "\nheight = " << grid_.height
           << "\nwidth = " << grid_.width << "\nchannels = " << grid_.channels << "\nweight_shape = " << weights_.shape
           << "\nweight_size = " << weights_.size << "\nweight_tone = " << weights_.tone
           << "\nweight_bias = " << weights_.bias << "\ncorner_mid = " << corner_.mid << "\ncorner_scale = " << corner_.scale
           << "\narea_mid = " << area_.mid << "\narea_scale = " << area_.scale << "\ntone_mid = " << tone_.mid
           << "\ntone_scale = " << tone_.scale << "\n";
    }

    static JointEmbeddingSpace load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw Error("cannot open " + path);
        std::map<std::string, std::string> kv;
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                s.erase(0, s.find_first_not_of(" \t"));
                s.erase(s.find_last_not_of(" \t\r") + 1);
                return s;
            };
            kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        auto num = [&](const std::string& key) {
            const auto it = kv.find(key);
            if (it == kv.end()) throw ParseError(key, "missing in " + path);
            try {
                return std::stod(it->second);
            } catch (const std::exception&) {
                throw ParseError(key, "not a number in " + path);
            }
        };
        Weights w{num("weight_shape"), num("weight_size"), num("weight_tone"), num("weight_bias")};
        JointEmbeddingSpace s(static_cast<std::size_t>(num("dim")), static_cast<std::uint64_t>(std::stoull(kv["anchor_seed"])),
                              GridShape{static_cast<std::size_t>(num("height")), static_cast<std::size_t>(num("width")),
                                        static_cast<std::size_t>(num("channels"))},
                              w);
        s.set_calibration({num("corner_mid"), num("corner_scale")}, {num("area_mid"), num("area_scale")},
                          {num("tone_mid"), num("tone_scale")});
        return s;
    }

private:
    std::size_t dim_ = 8;
    std::uint64_t anchor_seed_ = 0;
    GridShape grid_;
    Weights weights_;
    std::array<Vector, kAllConcepts.size()> anchors_;
    Vector bias_;
    FeatureCalibration corner_, area_, tone_;
};

/// Normalised sum of the prompt's concept anchors.
inline ConceptEmbedding embed_text(const JointEmbeddingSpace& space, const ToyPrompt& prompt) {
    if (prompt.concepts.empty()) throw RangeError("embed_text: empty prompt");
    if (prompt.concepts.size() == 1) return space.anchor_embedding(prompt.concepts.front());
    Vector z(space.dim(), 0.0);
    for (Concept c : prompt.concepts) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += space.anchor(c)[i];
    }
    return ConceptEmbedding::unit(std::move(z));
}

inline ConceptEmbedding embed_image(const JointEmbeddingSpace& space, const ImageGrid& image) {
    if (image.shape != space.grid()) throw DimensionError("embed_image: image shape does not match the space");
    return ConceptEmbedding::unit(space.project(image_features(image)));
}

/// Cosine to each anchor of the attribute; returns the closer concept.
inline Concept closest_concept(const JointEmbeddingSpace& space, const ConceptEmbedding& z, Attribute a) {
    const auto pair = attribute_concepts(a);
    return cosine(z.values, space.anchor(pair[0])) >= cosine(z.values, space.anchor(pair[1])) ? pair[0] : pair[1];
}

/// Concept with the highest cosine over the whole vocabulary.
inline Concept argmax_concept(const JointEmbeddingSpace& space, const ConceptEmbedding& z) {
    Concept best = kAllConcepts.front();
    double best_cos = -2.0;
    for (Concept c : kAllConcepts) {
        const double v = cosine(z.values, space.anchor(c));
        if (v > best_cos) {
            best_cos = v;
            best = c;
        }
    }
    return best;
}

inline bool classify_square(const ImageGrid& img, double threshold) {
    const std::size_t h = img.shape.height, w = img.shape.width;
    const auto g = detail::gray_view(img);
    const Vector occ = detail::soft_occupancy(g);
    double mass = 0.0, mr = 0.0, mc = 0.0;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            mass += occ[r * w + c];
            mr += occ[r * w + c] * static_cast<double>(r);
            mc += occ[r * w + c] * static_cast<double>(c);
        }
    if (!(mass > 0.0)) return false;
    mr /= mass;
    mc /= mass;
    double chebyshev = 0.0, euclid = 0.0;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double y = static_cast<double>(r) - mr, x = static_cast<double>(c) - mc;
            const double m = std::max(std::abs(x), std::abs(y));
            chebyshev += occ[r * w + c] * m * m;
            euclid += occ[r * w + c] * (x * x + y * y);
        }
    return euclid > 0.0 && chebyshev / euclid < threshold;
}

}  // namespace preditor
