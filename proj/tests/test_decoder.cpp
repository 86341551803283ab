// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>

#include "preditor/analytic.hpp"
#include "toy_fixture.hpp"

using namespace preditor;
using namespace preditor::testing;

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ConceptEmbedding axis(std::size_t k) {
    Vector v(8, 0.0);
    v[k] = 1.0;
    return ConceptEmbedding::unit(v);
}

// The decoder is conditioned on image embeddings from the prior; the edit
// embedding here is a fixed c = 0.65 conceptual edit of the disc towards
// {square}. (The raw text embedding sits off that manifold: under it rddim
// loses to sdedit at s = 0.4.)
const ConceptEmbedding& edit_embedding() {
    static const ConceptEmbedding z = [] {
        const auto& m = toy_models();
        return conceptual_edit(m.prior, m.space, embed_image(m.space, canonical_disc()), prompt_of(Concept::square),
                               0.65, 0, toy_settings().prior);
    }();
    return z;
}

StructuralEditInput edit_input(const ImageGrid& base, double s, StructuralMode mode, std::uint64_t seed,
                               const EditMask* mask = nullptr) {
    const auto& space = toy_models().space;
    StructuralEditInput in;
    in.base = &base;
    in.base_embedding = embed_image(space, base);
    in.edit_embedding = edit_embedding();
    in.s = s;
    in.mode = mode;
    in.mask = mask;
    in.seed = seed;
    return in;
}

}  // namespace

TEST(MaskedBlend, CheckerboardByHand) {
    const GridShape g{2, 2, 1};
    EditMask mask(2, 2, 0);
    mask.at(0, 0) = 1;
    mask.at(1, 1) = 1;
    Vector edited{1.0, 2.0, 3.0, 4.0};
    const Vector reference{10.0, 20.0, 30.0, 40.0};
    masked_blend(edited, reference, mask, g);
    EXPECT_EQ(edited, (Vector{1.0, 20.0, 30.0, 4.0}));
}

TEST(MaskedBlend, ConstantMasksAndChannels) {
    const GridShape g{2, 2, 3};
    Vector reference(12), edited(12);
    for (std::size_t i = 0; i < 12; ++i) {
        reference[i] = 0.5 + i;
        edited[i] = -1.0 - i;
    }
    Vector ones = edited, zeros = edited;
    masked_blend(ones, reference, EditMask(2, 2, 1), g);
    masked_blend(zeros, reference, EditMask(2, 2, 0), g);
    EXPECT_EQ(ones, edited);
    EXPECT_EQ(zeros, reference);
    EditMask one_pixel(2, 2, 0);
    one_pixel.at(0, 1) = 1;
    Vector mixed = edited;
    masked_blend(mixed, reference, one_pixel, g);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(mixed[i], (i / 3 == 1) ? edited[i] : reference[i]);
    Vector wrong = edited;
    EXPECT_THROW(masked_blend(wrong, reference, EditMask(3, 2, 1), g), DimensionError);
    EditMask bad(2, 2, 0);
    bad.values[0] = 2;
    EXPECT_THROW(masked_blend(wrong, reference, bad, g), RangeError);
}

TEST(Decode, DiscTextDecodesToDiscs) {
    const auto& m = toy_models();
    const auto& st = toy_settings();
    int discs = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto z = text_to_embedding(m.prior, m.space, prompt_of(Concept::disc), seed, st.prior);
        discs += !classify_square(decode(m.decoder, st.grid, z, seed, st.decoder).image);
    }
    EXPECT_GE(discs, 85);
}

TEST(Decode, DeterministicAndClamped) {
    const auto& m = toy_models();
    const auto& st = toy_settings();
    const auto z = embed_text(m.space, ToyPrompt::parse("square bright large"));
    const auto a = decode(m.decoder, st.grid, z, 4, st.decoder);
    const auto b = decode(m.decoder, st.grid, z, 4, st.decoder);
    const auto c = decode(m.decoder, st.grid, z, 5, st.decoder);
    EXPECT_TRUE(bit_equal(a.image.values, b.image.values));
    EXPECT_FALSE(bit_equal(a.image.values, c.image.values));
    for (std::size_t i = 0; i < a.image.values.size(); ++i) {
        EXPECT_GE(a.image.values[i], 0.0);
        EXPECT_LE(a.image.values[i], 1.0);
        EXPECT_EQ(a.image.values[i], std::clamp(a.latent.state[i], 0.0, 1.0));
    }
    EXPECT_THROW(decode(m.decoder, GridShape{8, 8, 1}, z, 0, st.decoder), DimensionError);
}

TEST(StructuralEdit, ZeroStrengthIsIdentity) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    for (StructuralMode mode : {StructuralMode::rddim, StructuralMode::sdedit}) {
        const auto out = structural_edit(m.decoder, edit_input(base, 0.0, mode, 3), toy_settings().decoder);
        EXPECT_TRUE(bit_equal(out.image.values, base.values));
    }
}

TEST(StructuralEdit, AllZeroMaskReturnsBase) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    const EditMask keep(16, 16, 0);
    for (StructuralMode mode : {StructuralMode::rddim, StructuralMode::sdedit}) {
        for (double s : {0.3, 0.7, 1.0}) {
            const auto out = structural_edit(m.decoder, edit_input(base, s, mode, 8, &keep), toy_settings().decoder);
            EXPECT_TRUE(bit_equal(out.image.values, base.values)) << mode_name(mode) << " s=" << s;
        }
    }
}

TEST(StructuralEdit, MaskedOffPixelsKeepBaseBits) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    EditMask mask(16, 16, 0);
    for (std::size_t r = 4; r < 12; ++r)
        for (std::size_t c = 2; c < 9; ++c) mask.at(r, c) = 1;
    for (StructuralMode mode : {StructuralMode::rddim, StructuralMode::sdedit}) {
        const auto out = structural_edit(m.decoder, edit_input(base, 0.6, mode, 2, &mask), toy_settings().decoder);
        bool changed = false;
        for (std::size_t p = 0; p < 256; ++p) {
            if (mask.values[p] == 0) {
                EXPECT_EQ(out.image.values[p], base.values[p]);
            } else {
                changed = changed || out.image.values[p] != base.values[p];
            }
        }
        EXPECT_TRUE(changed);
    }
}

TEST(StructuralEdit, RejectsBadInputs) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    EXPECT_THROW(structural_edit(m.decoder, edit_input(base, 1.2, StructuralMode::rddim, 0)), RangeError);
    const EditMask wrong(8, 8, 1);
    EXPECT_THROW(structural_edit(m.decoder, edit_input(base, 0.5, StructuralMode::rddim, 0, &wrong)), DimensionError);
    StructuralEditInput none = edit_input(base, 0.5, StructuralMode::rddim, 0);
    none.base = nullptr;
    EXPECT_THROW(structural_edit(m.decoder, none), Error);
}

// Mean pixel L2 to the base over 20 seeds never falls as s grows.
TEST(StructuralEdit, DistanceGrowsWithStrength) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    for (StructuralMode mode : {StructuralMode::rddim, StructuralMode::sdedit}) {
        double prev = 0.0;
        for (double s : {0.2, 0.4, 0.6, 0.8}) {
            double d = 0.0;
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                d += l2_distance(structural_edit(m.decoder, edit_input(base, s, mode, seed), toy_settings().decoder).image.values,
                                 base.values) / 20.0;
            }
            EXPECT_GE(d, prev) << mode_name(mode) << " s=" << s;
            prev = d;
        }
    }
}

TEST(StructuralEdit, InversionKeepsMoreOfTheBaseThanNoising) {
    const auto& m = toy_models();
    const auto base = canonical_disc();
    for (double s : {0.4, 0.6}) {
        double rddim = 0.0, sdedit = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            rddim += fidelity_lpips(structural_edit(m.decoder, edit_input(base, s, StructuralMode::rddim, seed),
                                                    toy_settings().decoder).image, base);
            sdedit += fidelity_lpips(structural_edit(m.decoder, edit_input(base, s, StructuralMode::sdedit, seed),
                                                     toy_settings().decoder).image, base);
        }
        EXPECT_GE(rddim, sdedit) << "s=" << s;
    }
}

// Full-strength inversion and regeneration under the base embedding, on an
// analytic 2x2 decoder. The explicit update is first order (error ~ 4.6 / n),
// so the 1e-2 bound needs the finest grid: one step per timestep.
TEST(StructuralEdit, AnalyticFullStrengthReconstruction) {
    const auto sched = default_schedule();
    const GaussianMixture mix{{0.5, 0.5}, {{0.8, 0.2, 0.3, 0.7}, {0.2, 0.7, 0.6, 0.3}}, {0.01, 0.01}};
    const AnalyticDenoiser model(mix, sched, {axis(0), axis(1)}, 2.0);
    CounterRng rng(3, Stream::evaluation);
    std::vector<ImageGrid> bases;
    for (int i = 0; i < 10; ++i) {
        const std::size_t k = rng.below(2);
        Vector x(4);
        for (std::size_t j = 0; j < 4; ++j) x[j] = mix.means[k][j] + 0.1 * rng.normal();
        bases.emplace_back(GridShape{2, 2, 1}, x);
    }
    auto mean_error = [&](int n) {
        double e = 0.0;
        for (const auto& b : bases) {
            StructuralEditInput in;
            in.base = &b;
            in.base_embedding = axis(0);
            in.edit_embedding = axis(0);
            in.s = 1.0;
            in.mode = StructuralMode::rddim;
            DecoderSampling opts;
            opts.n_steps = n;
            opts.guidance = 1.0;
            e += relative_l2_error(structural_edit(model, in, opts).latent.state, b.values) / 10.0;
        }
        return e;
    };
    const double e250 = mean_error(250), e1000 = mean_error(1000);
    EXPECT_LT(e1000, 1e-2);
    EXPECT_GT(e250 / e1000, 3.0);
}

TEST(DecoderTrainingSet, PairsPixelsWithImageEmbeddings) {
    const auto& m = toy_models();
    const auto items = generate_dataset(4, 10, GridShape{});
    const auto set = decoder_training_set(m.space, items);
    ASSERT_EQ(set.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(set[i].state, items[i].image.values);
        EXPECT_EQ(set[i].cond.embedding->values, embed_image(m.space, items[i].image).values);
    }
}
