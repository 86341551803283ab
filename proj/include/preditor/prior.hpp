// SPDX-License-Identifier: Apache-2.0
#pragma once

// Embedding-space half of the editor: text -> image-embedding generation and
// the conceptual edit, which injects a base embedding into the prior's
// sampling trajectory at t_c = round(T c) and finishes sampling under the
// edit text.
//
// The prior diffuses embeddings multiplied by a fixed state_scale (sqrt(d)
// gives unit per-coordinate scale for unit vectors). Intermediate states stay
// unnormalised; only the final output is projected back onto the sphere.

#include <functional>

#include "preditor/inversion.hpp"
#include "preditor/space.hpp"
#include "preditor/train.hpp"

namespace preditor {

struct PriorSampling {
    int n_steps = 100;  // steps for a full-horizon run; partial runs scale proportionally
    double guidance = 1.0;
    double eta = 0.0;
    double state_scale = 1.0;  // must match the scale used for the training set
};

inline double sqrt_dim_scale(std::size_t dim) { return std::sqrt(static_cast<double>(dim)); }

/// Final prior output renormalised onto the sphere.
template <NoisePredictor P>
ConceptEmbedding text_to_embedding(const P& prior, const JointEmbeddingSpace& space, const ToyPrompt& prompt,
                                   std::uint64_t seed, const PriorSampling& opts = {}) {
    const Conditioning cond = Conditioning::on(embed_text(space, prompt));
    const NoiseSchedule& schedule = prior.schedule();
    const LatentState z0 = sample(prior, cond, schedule, opts.n_steps, seed, opts.guidance, opts.eta);
    return ConceptEmbedding::unit(z0.state);
}

/// Unnormalised intermediate prior states observed during a conceptual edit.
using PriorObserver = std::function<void(const LatentState&)>;

template <NoisePredictor P>
ConceptEmbedding conceptual_edit(const P& prior, const JointEmbeddingSpace& space, const ConceptEmbedding& z_b,
                                 const ToyPrompt& edit_prompt, double c, std::uint64_t seed,
                                 const PriorSampling& opts = {}, const PriorObserver& observer = {}) {
    if (!(c >= 0.0 && c <= 1.0)) throw RangeError("conceptual edit strength c outside [0, 1]");
    if (!z_b.is_unit()) throw RangeError("conceptual edit requires a unit-norm base embedding");
    const NoiseSchedule& schedule = prior.schedule();
    const Timestep t_c = strength_to_timestep(c, schedule.horizon);
    if (t_c == 0) return z_b;
    const Conditioning cond = Conditioning::on(embed_text(space, edit_prompt));
    const int n = steps_for_window(opts.n_steps, t_c, schedule.horizon);
    if (!(opts.state_scale > 0.0)) throw RangeError("prior state scale must be positive");
    LatentState injected{z_b.values, t_c};
    for (double& v : injected.state) v *= opts.state_scale;
    if (observer) observer(injected);
    const LatentState z0 = sample_from(prior, injected, cond, schedule, n, opts.guidance, opts.eta, seed,
                                       [&](LatentState& z) {
                                           if (observer) observer(z);
                                       });
    return ConceptEmbedding::unit(z0.state);
}

/// Every non-empty attribute subset of each item's prompt, paired with the
/// scaled image embedding: 7 examples per item.
inline std::vector<TrainingExample> prior_training_set(const JointEmbeddingSpace& space,
                                                       const std::vector<DatasetItem>& items,
                                                       double state_scale = 1.0) {
    if (!(state_scale > 0.0)) throw RangeError("prior state scale must be positive");
    std::vector<TrainingExample> out;
    out.reserve(items.size() * 7);
    for (const auto& it : items) {
        Vector state = embed_image(space, it.image).values;
        for (double& v : state) v *= state_scale;
        const auto& concepts = it.prompt.concepts;
        for (unsigned mask = 1; mask < (1u << concepts.size()); ++mask) {
            ToyPrompt sub;
            for (std::size_t k = 0; k < concepts.size(); ++k) {
                if (mask & (1u << k)) sub.add(concepts[k]);
            }
            out.push_back(TrainingExample{state, Conditioning::on(embed_text(space, sub))});
        }
    }
    return out;
}

}  // namespace preditor
