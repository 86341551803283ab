// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>

#include "preditor/common.hpp"

namespace preditor {

inline constexpr double kUnitNormTolerance = 1e-6;

/// A vector in the joint text/image embedding space. Prior trajectories live
/// off the sphere; only final outputs are flagged normalized.
struct ConceptEmbedding {
    Vector values;
    bool normalized = false;

    std::size_t dim() const { return values.size(); }

    static ConceptEmbedding unit(Vector v) {
        const double n = l2_norm(v);
        if (n == 0.0 || !std::isfinite(n)) throw NumericError("cannot normalize a zero or non-finite embedding");
        for (double& x : v) x /= n;
        return ConceptEmbedding{std::move(v), true};
    }

    bool is_unit() const { return std::abs(l2_norm(values) - 1.0) <= kUnitNormTolerance; }
};

inline double cosine(const ConceptEmbedding& a, const ConceptEmbedding& b) {
    return cosine(a.values, b.values);
}

/// Conditioning input of a noise predictor; an absent embedding means unconditional.
struct Conditioning {
    std::optional<ConceptEmbedding> embedding;

    static Conditioning none() { return {}; }
    static Conditioning on(const ConceptEmbedding& e) {
        if (!e.is_unit()) throw RangeError("conditioning embedding must have unit L2 norm");
        return Conditioning{e};
    }

    bool present() const { return embedding.has_value(); }
};

}  // namespace preditor
