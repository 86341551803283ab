// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pixel half of the editor. The decoder is a conditional denoiser over the
// pixel grid itself (identity latent), conditioned on an image embedding.

#include <optional>

#include "preditor/inversion.hpp"
#include "preditor/space.hpp"
#include "preditor/train.hpp"

namespace preditor {

enum class StructuralMode { rddim, sdedit };

inline std::string_view mode_name(StructuralMode m) { return m == StructuralMode::rddim ? "rddim" : "sdedit"; }

struct DecoderSampling {
    int n_steps = 100;  // full-horizon step count
    double guidance = 5.0;
    double eta = 0.0;
};

inline Conditioning decoder_condition(const ConceptEmbedding& z) { return Conditioning::on(z); }

/// Unclamped latent and its [0, 1]-clamped image.
struct DecodeResult {
    LatentState latent;
    ImageGrid image;
};

template <NoisePredictor P>
DecodeResult decode(const P& decoder, const GridShape& grid, const ConceptEmbedding& z_img, std::uint64_t seed,
                    const DecoderSampling& opts = {}) {
    require_same_dim(grid.size(), decoder.state_dim(), "decode");
    LatentState z = sample(decoder, decoder_condition(z_img), decoder.schedule(), opts.n_steps, seed, opts.guidance,
                           opts.eta);
    ImageGrid img = ImageGrid(grid, z.state).clamped();
    return {std::move(z), std::move(img)};
}

/// Pixelwise m * edited + (1 - m) * reference; the mask broadcasts over channels.
inline void masked_blend(Vector& edited, std::span<const double> reference, const EditMask& mask,
                         const GridShape& grid) {
    mask.check_matches(grid);
    require_same_dim(edited.size(), grid.size(), "masked_blend");
    require_same_dim(reference.size(), grid.size(), "masked_blend reference");
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p]) continue;
        for (std::size_t ch = 0; ch < grid.channels; ++ch) {
            const std::size_t i = p * grid.channels + ch;
            edited[i] = reference[i];
        }
    }
}

struct StructuralEditInput {
    const ImageGrid* base = nullptr;     // x_b
    ConceptEmbedding base_embedding;     // conditions the reverse-DDIM pass
    ConceptEmbedding edit_embedding;     // conditions the re-generation
    double s = 0.45;
    StructuralMode mode = StructuralMode::rddim;
    const EditMask* mask = nullptr;
    std::uint64_t seed = 0;
};

/// Noises x_b to t_s = round(T s) and re-generates from there under the edit
/// embedding. With a mask, non-editable pixels are reset after every step to
/// the base's own state at that timestep: its reverse-DDIM trajectory in rddim
/// mode, seeded forward noise in sdedit mode, and x_b itself at t = 0.
template <NoisePredictor P>
DecodeResult structural_edit(const P& decoder, const StructuralEditInput& in, const DecoderSampling& opts = {}) {
    if (in.base == nullptr) throw Error("structural edit requires a base image");
    if (!(in.s >= 0.0 && in.s <= 1.0)) throw RangeError("structural edit strength s outside [0, 1]");
    const GridShape grid = in.base->shape;
    require_same_dim(grid.size(), decoder.state_dim(), "structural_edit");
    if (in.mask) in.mask->check_matches(grid);
    const NoiseSchedule& schedule = decoder.schedule();
    const Timestep t_s = strength_to_timestep(in.s, schedule.horizon);
    const LatentState x_b{in.base->values, 0};
    if (t_s == 0) return {x_b, in.base->clamped()};

    const int n = steps_for_window(opts.n_steps, t_s, schedule.horizon);
    std::vector<LatentState> trajectory;
    LatentState start;
    if (in.mode == StructuralMode::rddim) {
        trajectory = invert_trajectory(decoder, x_b, decoder_condition(in.base_embedding), in.s, schedule, n);
        start = trajectory.back();
    } else {
        start = noise_to(x_b, t_s, schedule, in.seed);
    }

    auto reference_at = [&](Timestep t) -> Vector {
        if (t == 0) return x_b.state;
        if (in.mode == StructuralMode::sdedit) return noise_to(x_b, t, schedule, in.seed).state;
        for (const auto& st : trajectory) {
            if (st.t == t) return st.state;
        }
        throw OrderingError("no base trajectory state at t=" + std::to_string(t));
    };

    LatentState out = sample_from(decoder, start, decoder_condition(in.edit_embedding), schedule, n, opts.guidance,
                                  opts.eta, in.seed, [&](LatentState& z) {
                                      if (in.mask) masked_blend(z.state, reference_at(z.t), *in.mask, grid);
                                  });
    ImageGrid img = ImageGrid(grid, out.state).clamped();
    return {std::move(out), std::move(img)};
}

/// Decoder pairs (pixels, embed_image(pixels)).
inline std::vector<TrainingExample> decoder_training_set(const JointEmbeddingSpace& space,
                                                         const std::vector<DatasetItem>& items) {
    std::vector<TrainingExample> out;
    out.reserve(items.size());
    for (const auto& it : items) {
        out.push_back(TrainingExample{it.image.values, decoder_condition(embed_image(space, it.image))});
    }
    return out;
}

}  // namespace preditor
