// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end editor: z_b = embed_image(x_b), z_e = conceptual_edit(z_b, y_e, c),
// x_e = structural_edit(x_b, z_b, z_e, s). The ablation variants swap the
// conceptual edit for plain text-to-embedding generation or skip the prior.

#include "preditor/decoder.hpp"
#include "preditor/metrics.hpp"
#include "preditor/prior.hpp"

namespace preditor {

enum class Variant { preditor, prior_rddim, prior_sdedit, sdedit_only };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::preditor, Variant::prior_rddim,
                                                        Variant::prior_sdedit, Variant::sdedit_only};

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::preditor: return "preditor";
        case Variant::prior_rddim: return "prior_rddim";
        case Variant::prior_sdedit: return "prior_sdedit";
        case Variant::sdedit_only: return "sdedit_only";
    }
    return "?";
}

inline Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants) {
        if (variant_name(v) == name) return v;
    }
    throw ParseError("variant", "unknown variant '" + std::string(name) + "'");
}

inline StructuralMode parse_mode(std::string_view name) {
    if (name == "rddim") return StructuralMode::rddim;
    if (name == "sdedit") return StructuralMode::sdedit;
    throw ParseError("method", "unknown method '" + std::string(name) + "'");
}

struct EditRequest {
    ImageGrid base;
    ToyPrompt prompt;
    double c = 0.65;
    double s = 0.45;
    StructuralMode method = StructuralMode::rddim;
    Variant variant = Variant::preditor;
    std::optional<EditMask> mask;
    std::uint64_t prior_seed = 0;
    std::uint64_t decoder_seed = 0;
    PriorSampling prior;
    DecoderSampling decoder;

    void validate() const {
        if (!(c >= 0.0 && c <= 1.0)) throw RangeError("c must lie in [0, 1]");
        if (!(s >= 0.0 && s <= 1.0)) throw RangeError("s must lie in [0, 1]");
        if (prompt.concepts.empty()) throw RangeError("edit prompt is empty");
        if (mask) mask->check_matches(base.shape);
    }
};

struct EditTrace {
    Variant variant = Variant::preditor;
    StructuralMode method = StructuralMode::rddim;
    ConceptEmbedding z_b;
    ConceptEmbedding z_e;
    Timestep t_c = 0;
    Timestep t_s = 0;
    std::vector<LatentState> prior_states;  // unnormalised; empty unless the conceptual edit ran
    double embedding_relevance = 0.0;       // cos(z_e, embed_text(y_e))
    double embedding_base_cosine = 0.0;     // cos(z_e, z_b)
    double relevance = 0.0;                 // cos(embed_image(x_e), embed_text(y_e))
    double base_cosine = 0.0;               // cos(embed_image(x_e), z_b)
    double fidelity = 0.0;                  // 1 - lpips_proxy(x_e, x_b)
    double structure_distance = 0.0;
    ImageGrid output;
};

struct EditResult {
    ImageGrid image;
    EditTrace trace;
};

namespace detail {

/// Runs `f`, rethrowing library errors with the stage name prepended and
/// their original type preserved.
template <class F>
auto in_stage(std::string_view stage, F&& f) -> decltype(f()) {
    const auto tag = [&](const std::exception& e) { return "[" + std::string(stage) + "] " + e.what(); };
    try {
        return f();
    } catch (const ParseError& e) {
        throw ParseError(e.key(), "[" + std::string(stage) + "] " + e.what());
    } catch (const RangeError& e) {
        throw RangeError(tag(e));
    } catch (const DimensionError& e) {
        throw DimensionError(tag(e));
    } catch (const OrderingError& e) {
        throw OrderingError(tag(e));
    } catch (const NumericError& e) {
        throw NumericError(tag(e));
    } catch (const Error& e) {
        throw Error(tag(e));
    }
}

}  // namespace detail

/// Every variant through one code path. preditor runs the conceptual edit
/// with the request's method; prior_* generate z_e from the text alone
/// (t_c recorded as T); sdedit_only conditions the decoder on the text
/// embedding directly and always uses SDEdit noising.
template <NoisePredictor Prior, NoisePredictor Decoder>
EditResult ablation_variant(const EditRequest& req, const Prior& prior, const Decoder& decoder,
                            const JointEmbeddingSpace& space) {
    detail::in_stage("request", [&] { req.validate(); });
    EditTrace tr;
    tr.variant = req.variant;
    tr.t_s = strength_to_timestep(req.s, decoder.schedule().horizon);
    tr.z_b = detail::in_stage("embed_image", [&] { return embed_image(space, req.base); });
    const ToyPrompt& y = req.prompt;

    switch (req.variant) {
        case Variant::preditor:
            tr.method = req.method;
            tr.t_c = strength_to_timestep(req.c, prior.schedule().horizon);
            tr.z_e = detail::in_stage("conceptual_edit", [&] {
                return conceptual_edit(prior, space, tr.z_b, y, req.c, req.prior_seed, req.prior,
                                       [&](const LatentState& z) { tr.prior_states.push_back(z); });
            });
            break;
        case Variant::prior_rddim:
        case Variant::prior_sdedit:
            tr.method = req.variant == Variant::prior_rddim ? StructuralMode::rddim : StructuralMode::sdedit;
            tr.t_c = prior.schedule().horizon;
            tr.z_e = detail::in_stage("text_to_embedding",
                                      [&] { return text_to_embedding(prior, space, y, req.prior_seed, req.prior); });
            break;
        case Variant::sdedit_only:
            tr.method = StructuralMode::sdedit;
            tr.t_c = 0;
            tr.z_e = detail::in_stage("embed_text", [&] { return embed_text(space, y); });
            break;
    }

    DecodeResult out = detail::in_stage("structural_edit", [&] {
        StructuralEditInput in;
        in.base = &req.base;
        in.base_embedding = tr.z_b;
        in.edit_embedding = tr.z_e;
        in.s = req.s;
        in.mode = tr.method;
        in.mask = req.mask ? &*req.mask : nullptr;
        in.seed = req.decoder_seed;
        return structural_edit(decoder, in, req.decoder);
    });

    detail::in_stage("metrics", [&] {
        const ConceptEmbedding text = embed_text(space, y);
        const ConceptEmbedding z_out = embed_image(space, out.image);
        tr.embedding_relevance = cosine(tr.z_e, text);
        tr.embedding_base_cosine = cosine(tr.z_e, tr.z_b);
        tr.relevance = cosine(z_out, text);
        tr.base_cosine = cosine(z_out, tr.z_b);
        tr.fidelity = fidelity_lpips(out.image, req.base);
        tr.structure_distance = structural_distance(out.image, req.base);
    });
    tr.output = out.image;
    return EditResult{std::move(out.image), std::move(tr)};
}

template <NoisePredictor Prior, NoisePredictor Decoder>
EditResult preditor_edit(const EditRequest& req, const Prior& prior, const Decoder& decoder,
                         const JointEmbeddingSpace& space) {
    EditRequest r = req;
    r.variant = Variant::preditor;
    return ablation_variant(r, prior, decoder, space);
}

/// Plain decode of an edited embedding, no structural edit.
template <NoisePredictor Decoder>
ImageGrid visualize_conceptual(const Decoder& decoder, const GridShape& grid, const ConceptEmbedding& z_e,
                               std::uint64_t seed, const DecoderSampling& opts = {}) {
    if (!z_e.is_unit()) throw RangeError("visualize_conceptual requires a unit-norm embedding");
    return decode(decoder, grid, z_e, seed, opts).image;
}

}  // namespace preditor
