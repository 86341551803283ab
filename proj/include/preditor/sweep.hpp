// SPDX-License-Identifier: Apache-2.0
#pragma once

// Batch experiments over the pipeline: metric-vs-c sweep tables and the
// ablation battery. Cells run on a bounded worker pool; rows are collected
// in (c, s, seed) order so output bytes never depend on scheduling.

#include <iomanip>
#include <sstream>

#include "preditor/parallel.hpp"
#include "preditor/pipeline.hpp"

namespace preditor {

/// One base image with the prompt it is edited towards.
struct EditCase {
    ImageGrid base;
    ToyPrompt prompt;
};

/// Flip-the-shape edits over `n` dataset renders: discs go to {square} and
/// squares to {disc}.
inline std::vector<EditCase> shape_flip_cases(std::size_t n, std::uint64_t seed, const GridShape& grid, int jitter = 2) {
    std::vector<EditCase> out;
    for (auto& it : generate_dataset(n, seed, grid, jitter)) {
        ToyPrompt p;
        p.add(it.factors.shape == Shape::disc ? Concept::square : Concept::disc);
        out.push_back(EditCase{std::move(it.image), std::move(p)});
    }
    return out;
}

struct SweepOptions {
    StructuralMode method = StructuralMode::rddim;
    PriorSampling prior;
    DecoderSampling decoder;
    std::size_t workers = 0;  // 0 = available parallelism
};

struct SweepRow {
    double c = 0.0;
    double s = 0.0;
    std::size_t seed_count = 0;  // samples averaged: cases x seeds
    double relevance_mean = 0.0;
    double relevance_std = 0.0;
    double fidelity_mean = 0.0;
    double fidelity_std = 0.0;
    double base_cosine_mean = 0.0;
};

inline constexpr const char* kSweepHeader =
    "c,s,seed_count,relevance_mean,relevance_std,fidelity_mean,fidelity_std,base_cosine_mean";

/// One row per (c, s), ordered by s then c. Every (case, seed) pair uses the
/// seed for both the prior and the decoder, and the same pairs are reused in
/// every cell so differences between cells are not seed noise.
template <NoisePredictor Prior, NoisePredictor Decoder>
std::vector<SweepRow> sweep_curves(const Prior& prior, const Decoder& decoder, const JointEmbeddingSpace& space,
                                   const std::vector<EditCase>& cases, const std::vector<double>& c_grid,
                                   const std::vector<double>& s_values, const std::vector<std::uint64_t>& seeds,
                                   const SweepOptions& opts = {}) {
    if (cases.empty() || c_grid.empty() || s_values.empty() || seeds.empty()) {
        throw RangeError("sweep_curves needs non-empty cases, c grid, s values and seeds");
    }
    for (double c : c_grid) {
        if (!(c >= 0.0 && c <= 1.0)) throw RangeError("sweep c value outside [0, 1]");
    }
    for (double s : s_values) {
        if (!(s >= 0.0 && s <= 1.0)) throw RangeError("sweep s value outside [0, 1]");
    }
    const std::size_t per_cell = cases.size() * seeds.size();
    const std::size_t n_cells = c_grid.size() * s_values.size();
    struct Sample {
        double relevance, fidelity, base_cosine;
    };
    std::vector<SweepRow> rows(n_cells);
    std::vector<Vector> rel(n_cells), fid(n_cells), bc(n_cells);

    ordered_parallel_for(
        n_cells * per_cell, opts.workers,
        [&](std::size_t idx) {
            const std::size_t cell = idx / per_cell, k = idx % per_cell;
            const EditCase& ec = cases[k / seeds.size()];
            EditRequest req;
            req.base = ec.base;
            req.prompt = ec.prompt;
            req.s = s_values[cell / c_grid.size()];
            req.c = c_grid[cell % c_grid.size()];
            req.method = opts.method;
            req.prior_seed = req.decoder_seed = seeds[k % seeds.size()];
            req.prior = opts.prior;
            req.decoder = opts.decoder;
            const EditTrace tr = preditor_edit(req, prior, decoder, space).trace;
            return Sample{tr.relevance, tr.fidelity, tr.base_cosine};
        },
        [&](std::size_t idx, Sample smp) {
            const std::size_t cell = idx / per_cell;
            rel[cell].push_back(smp.relevance);
            fid[cell].push_back(smp.fidelity);
            bc[cell].push_back(smp.base_cosine);
        });

    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        SweepRow& r = rows[cell];
        r.s = s_values[cell / c_grid.size()];
        r.c = c_grid[cell % c_grid.size()];
        r.seed_count = per_cell;
        r.relevance_mean = mean(rel[cell]);
        r.relevance_std = per_cell > 1 ? stddev(rel[cell]) : 0.0;
        r.fidelity_mean = mean(fid[cell]);
        r.fidelity_std = per_cell > 1 ? stddev(fid[cell]) : 0.0;
        r.base_cosine_mean = mean(bc[cell]);
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << kSweepHeader << '\n' << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.c << ',' << r.s << ',' << r.seed_count << ',' << r.relevance_mean << ',' << r.relevance_std << ','
           << r.fidelity_mean << ',' << r.fidelity_std << ',' << r.base_cosine_mean << '\n';
    }
    return os.str();
}

/// Trend statistics for one s slice. Correlations use rows with c >= c_min;
/// the product optimum is searched over the whole slice.
struct SweepTrend {
    double s = 0.0;
    std::size_t points = 0;
    double relevance_spearman = 0.0;
    double fidelity_spearman = 0.0;
    double base_cosine_spearman = 0.0;
    double best_c = 0.0;
    bool best_interior = false;
};

inline SweepTrend sweep_trend(const std::vector<SweepRow>& rows, double s, double c_min = 0.3) {
    SweepTrend t;
    t.s = s;
    Vector cs, rel, fid, bc;
    double best = -std::numeric_limits<double>::infinity(), lo = 2.0, hi = -1.0;
    for (const auto& r : rows) {
        if (r.s != s) continue;
        lo = std::min(lo, r.c);
        hi = std::max(hi, r.c);
        const double product = r.fidelity_mean * r.relevance_mean;
        if (product > best) {
            best = product;
            t.best_c = r.c;
        }
        if (r.c + 1e-12 < c_min) continue;
        cs.push_back(r.c);
        rel.push_back(r.relevance_mean);
        fid.push_back(r.fidelity_mean);
        bc.push_back(r.base_cosine_mean);
    }
    t.points = cs.size();
    if (t.points >= 2) {
        t.relevance_spearman = spearman(cs, rel);
        t.fidelity_spearman = spearman(cs, fid);
        t.base_cosine_spearman = spearman(cs, bc);
    }
    t.best_interior = hi > lo && t.best_c > lo && t.best_c < hi;
    return t;
}

/// Line chart of mean relevance and mean fidelity against c, one pair of
/// polylines per s value. Pure text output, so it is as deterministic as the rows.
inline std::string sweep_svg(const std::vector<SweepRow>& rows) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
    std::vector<double> s_values;
    for (const auto& r : rows) {
        if (std::find(s_values.begin(), s_values.end(), r.s) == s_values.end()) s_values.push_back(r.s);
    }
    double y_lo = 1.0, y_hi = 0.0;
    for (const auto& r : rows) {
        y_lo = std::min({y_lo, r.relevance_mean, r.fidelity_mean});
        y_hi = std::max({y_hi, r.relevance_mean, r.fidelity_mean});
    }
    y_lo = std::floor(y_lo * 10.0) / 10.0;
    y_hi = std::ceil(y_hi * 10.0) / 10.0;
    if (y_hi <= y_lo) y_hi = y_lo + 0.1;
    auto px = [&](double c) { return L + c * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - y_lo) / (y_hi - y_lo) * (H - T - B); };

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 10; ++k) {
        const double c = k / 10.0;
        os << "<text x=\"" << px(c) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(1)
           << c << std::setprecision(2) << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double v = y_lo + (y_hi - y_lo) * k / 4.0;
        os << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">c</text>\n";
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    for (std::size_t si = 0; si < s_values.size(); ++si) {
        const char* colour = palette[si % 6];
        for (int metric = 0; metric < 2; ++metric) {
            os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\""
               << (metric == 1 ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
            for (const auto& r : rows) {
                if (r.s != s_values[si]) continue;
                os << px(r.c) << ',' << py(metric == 0 ? r.relevance_mean : r.fidelity_mean) << ' ';
            }
            os << "\"/>\n";
        }
        os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 14 * (si + 1) << "\" fill=\"" << colour
           << "\">s=" << s_values[si] << " relevance (solid), fidelity (dashed)</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---- ablation battery ----

struct AblationOptions {
    double c = 0.65;
    double s = 0.45;
    PriorSampling prior;
    DecoderSampling decoder;
    std::size_t workers = 0;
};

struct AblationRow {
    Variant variant = Variant::preditor;
    std::uint64_t seed = 0;
    std::size_t case_index = 0;
    double relevance = 0.0;
    double fidelity = 0.0;
    double structure_distance = 0.0;
    double base_cosine = 0.0;
    std::optional<double> fidelity_vs_prior_rddim;  // paired difference, same case and seed
};

/// Seed k edits case k mod cases.size() with prior and decoder seed k, for
/// every listed variant. Rows are ordered by variant (as listed), then seed.
template <NoisePredictor Prior, NoisePredictor Decoder>
std::vector<AblationRow> ablation_battery(const Prior& prior, const Decoder& decoder, const JointEmbeddingSpace& space,
                                          const std::vector<EditCase>& cases, const std::vector<Variant>& variants,
                                          const std::vector<std::uint64_t>& seeds, const AblationOptions& opts = {}) {
    if (cases.empty() || variants.empty() || seeds.empty()) {
        throw RangeError("ablation battery needs non-empty cases, variants and seeds");
    }
    std::vector<AblationRow> rows;
    rows.reserve(variants.size() * seeds.size());
    ordered_parallel_for(
        variants.size() * seeds.size(), opts.workers,
        [&](std::size_t idx) {
            AblationRow row;
            row.variant = variants[idx / seeds.size()];
            const std::size_t k = idx % seeds.size();
            row.seed = seeds[k];
            row.case_index = k % cases.size();
            EditRequest req;
            req.base = cases[row.case_index].base;
            req.prompt = cases[row.case_index].prompt;
            req.c = opts.c;
            req.s = opts.s;
            req.variant = row.variant;
            req.prior_seed = req.decoder_seed = row.seed;
            req.prior = opts.prior;
            req.decoder = opts.decoder;
            const EditTrace tr = ablation_variant(req, prior, decoder, space).trace;
            row.relevance = tr.relevance;
            row.fidelity = tr.fidelity;
            row.structure_distance = tr.structure_distance;
            row.base_cosine = tr.base_cosine;
            return row;
        },
        [&](std::size_t, AblationRow row) { rows.push_back(std::move(row)); });

    const auto ref = std::find(variants.begin(), variants.end(), Variant::prior_rddim);
    if (ref != variants.end()) {
        const std::size_t base = static_cast<std::size_t>(ref - variants.begin()) * seeds.size();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].fidelity_vs_prior_rddim = rows[i].fidelity - rows[base + i % seeds.size()].fidelity;
        }
    }
    return rows;
}

inline constexpr const char* kAblationHeader =
    "variant,seed,case,relevance,fidelity,structure_distance,base_cosine,fidelity_minus_prior_rddim";

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << kAblationHeader << '\n' << std::setprecision(17);
    for (const auto& r : rows) {
        os << variant_name(r.variant) << ',' << r.seed << ',' << r.case_index << ',' << r.relevance << ',' << r.fidelity
           << ',' << r.structure_distance << ',' << r.base_cosine << ',';
        if (r.fidelity_vs_prior_rddim) os << *r.fidelity_vs_prior_rddim;
        os << '\n';
    }
    return os.str();
}

struct VariantSummary {
    Variant variant = Variant::preditor;
    std::size_t count = 0;
    double relevance_mean = 0.0;
    double fidelity_mean = 0.0;
    double structure_distance_mean = 0.0;
    double base_cosine_mean = 0.0;
    std::optional<double> paired_fidelity_mean;  // mean of fidelity_minus_prior_rddim
    std::optional<double> paired_fidelity_t;     // mean / (sd / sqrt(n)) of the same differences
};

inline std::vector<VariantSummary> summarize_ablation(const std::vector<AblationRow>& rows) {
    std::vector<VariantSummary> out;
    for (Variant v : kAllVariants) {
        Vector rel, fid, sd, bc, paired;
        for (const auto& r : rows) {
            if (r.variant != v) continue;
            rel.push_back(r.relevance);
            fid.push_back(r.fidelity);
            sd.push_back(r.structure_distance);
            bc.push_back(r.base_cosine);
            if (r.fidelity_vs_prior_rddim) paired.push_back(*r.fidelity_vs_prior_rddim);
        }
        if (rel.empty()) continue;
        VariantSummary s;
        s.variant = v;
        s.count = rel.size();
        s.relevance_mean = mean(rel);
        s.fidelity_mean = mean(fid);
        s.structure_distance_mean = mean(sd);
        s.base_cosine_mean = mean(bc);
        if (!paired.empty()) {
            s.paired_fidelity_mean = mean(paired);
            if (paired.size() > 1) {
                const double se = stddev(paired) / std::sqrt(static_cast<double>(paired.size()));
                s.paired_fidelity_t = se > 0.0 ? *s.paired_fidelity_mean / se : 0.0;
            }
        }
        out.push_back(s);
    }
    return out;
}

inline std::string ablation_summary_csv(const std::vector<VariantSummary>& summaries) {
    std::ostringstream os;
    os << "variant,count,relevance_mean,fidelity_mean,structure_distance_mean,base_cosine_mean,"
          "paired_fidelity_mean,paired_fidelity_t\n"
       << std::setprecision(17);
    for (const auto& s : summaries) {
        os << variant_name(s.variant) << ',' << s.count << ',' << s.relevance_mean << ',' << s.fidelity_mean << ','
           << s.structure_distance_mean << ',' << s.base_cosine_mean << ',';
        if (s.paired_fidelity_mean) os << *s.paired_fidelity_mean;
        os << ',';
        if (s.paired_fidelity_t) os << *s.paired_fidelity_t;
        os << '\n';
    }
    return os.str();
}

}  // namespace preditor
