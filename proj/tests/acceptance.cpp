// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
//
//   preditor_acceptance               evaluate every criterion
//   preditor_acceptance --prepare DIR train or load the default toy models and
//                                     publish them as DIR/current

#include <chrono>
#include <cstdio>
#include <iostream>

#include "preditor/analytic.hpp"
#include "preditor/cli.hpp"

using namespace preditor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o, double secs) {
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

template <class F>
void run_criterion(int id, const char* name, F&& f) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = f();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0));
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

// ---- 1: analytic mixture predictor vs importance-sampled posterior mean ----

Outcome oracle_agreement() {
    const NoiseSchedule sched = default_schedule();
    constexpr std::size_t d = 3;
    GaussianMixture mix{{0.5, 0.3, 0.2},
                        {{1.0, -0.5, 0.3}, {-1.2, 0.8, -0.4}, {0.2, 1.5, 1.0}},
                        {0.09, 0.25, 0.04}};
    const AnalyticDenoiser model(mix, sched);
    CounterRng rng(2024, Stream::evaluation);
    constexpr std::size_t draws = 400000;
    // Prior draws shared by all probes.
    std::vector<Vector> xs(draws, Vector(d));
    for (auto& x : xs) {
        const double u = rng.uniform();
        const std::size_t k = u < 0.5 ? 0 : (u < 0.8 ? 1 : 2);
        for (std::size_t i = 0; i < d; ++i) x[i] = mix.means[k][i] + std::sqrt(mix.variances[k]) * rng.normal();
    }
    double worst = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        const auto t = static_cast<Timestep>(300 + rng.below(601));
        const double abar = sched.alpha_bar(t);
        const Vector& x0 = xs[rng.below(draws)];
        Vector eps(d);
        for (double& e : eps) e = rng.normal();
        const Vector z = forward_noise(x0, eps, t, sched);
        // Self-normalised importance weights p(z | x) over prior draws.
        Vector logw(draws);
        for (std::size_t n = 0; n < draws; ++n) {
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double r = z[i] - std::sqrt(abar) * xs[n][i];
                sq += r * r;
            }
            logw[n] = -0.5 * sq / (1.0 - abar);
        }
        const double top = *std::max_element(logw.begin(), logw.end());
        double wsum = 0.0;
        for (double& w : logw) wsum += (w = std::exp(w - top));
        Vector mean(d, 0.0);
        for (std::size_t n = 0; n < draws; ++n)
            for (std::size_t i = 0; i < d; ++i) mean[i] += logw[n] * xs[n][i] / wsum;
        Vector se(d, 0.0);
        for (std::size_t n = 0; n < draws; ++n)
            for (std::size_t i = 0; i < d; ++i) {
                const double w = logw[n] / wsum;
                se[i] += w * w * (xs[n][i] - mean[i]) * (xs[n][i] - mean[i]);
            }
        const Vector eps_hat = model.predict(z, t, Conditioning::none());
        const double gain = std::sqrt(abar) / std::sqrt(1.0 - abar);
        for (std::size_t i = 0; i < d; ++i) {
            const double eps_mc = (z[i] - std::sqrt(abar) * mean[i]) / std::sqrt(1.0 - abar);
            const double se_eps = gain * std::sqrt(se[i]);
            worst = std::max(worst, std::abs(eps_hat[i] - eps_mc) / se_eps);
        }
    }
    return {worst < 3.0, fmt("max |analytic - MC| = %.2f standard errors over 10 probes x %zu coords", worst, d)};
}

// ---- 2: inversion round trip with the analytic denoiser ----

Outcome round_trip() {
    const NoiseSchedule sched = default_schedule();
    constexpr std::size_t d = 4;
    GaussianMixture mix{{0.5, 0.5}, {{0.8, -0.6, 0.4, 0.1}, {-0.7, 0.5, -0.2, 0.9}}, {0.05, 0.05}};
    const ConceptEmbedding k0 = ConceptEmbedding::unit({1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    const ConceptEmbedding k1 = ConceptEmbedding::unit({0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    const AnalyticDenoiser model(mix, sched, {k0, k1}, 2.0);
    const Conditioning cond = Conditioning::on(k0);
    CounterRng rng(7, Stream::evaluation);
    std::vector<Vector> inputs;
    for (int n = 0; n < 10; ++n) {
        const std::size_t k = rng.below(2);
        Vector x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = mix.means[k][i] + std::sqrt(mix.variances[k]) * rng.normal();
        inputs.push_back(std::move(x));
    }
    // n_steps counts reverse-DDIM steps inside [0, t_s], as invert() takes it.
    auto mean_error = [&](int n) {
        double total = 0.0;
        for (const auto& x : inputs) {
            const LatentState z = invert(model, LatentState{x, 0}, cond, 0.7, sched, n);
            const LatentState back = sample_from(model, z, cond, sched, n, 1.0, 0.0, 0);
            total += relative_l2_error(back.state, x);
        }
        return total / static_cast<double>(inputs.size());
    };
    std::vector<double> errs;
    for (int steps : {25, 50, 100}) errs.push_back(mean_error(steps));
    const bool pass = errs[2] < 1e-2 && errs[1] <= errs[0] && errs[2] <= errs[1];
    std::string detail = fmt("mean relative L2 at 25/50/100 steps: %.3g / %.3g / %.3g (need < 1e-2 at 100)",
                             errs[0], errs[1], errs[2]);
    if (!pass) {
        // Diagnostic only: the explicit update is first order, so report where the target is met.
        int n = 100;
        while (n < 700 && mean_error(n) >= 1e-2) n += 50;
        detail += fmt("; error x steps = %.2f / %.2f / %.2f; 1e-2 first reached near %d steps", errs[0] * 25,
                      errs[1] * 50, errs[2] * 100, n);
    }
    return {pass, detail};
}

// ---- 3: endpoint identities ----

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Outcome endpoint_identities(const ToyModels& m, const ToySettings& s) {
    const auto cases = shape_flip_cases(5, 11, s.grid);
    int ok_c = 0, ok_s = 0, ok_mask = 0, ok_cfg = 0, total = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        ++total;
        const ConceptEmbedding zb = embed_image(m.space, cases[i].base);
        const ConceptEmbedding ze = conceptual_edit(m.prior, m.space, zb, cases[i].prompt, 0.0, i, s.prior);
        ok_c += bit_equal(ze.values, zb.values);

        StructuralEditInput in;
        in.base = &cases[i].base;
        in.base_embedding = zb;
        in.edit_embedding = embed_text(m.space, cases[i].prompt);
        in.s = 0.0;
        in.seed = i;
        ok_s += bit_equal(structural_edit(m.decoder, in, s.decoder).image.values, cases[i].base.values);

        EditRequest req;
        req.base = cases[i].base;
        req.prompt = cases[i].prompt;
        req.mask = EditMask(s.grid.height, s.grid.width, 1);
        for (std::size_t r = 0; r < s.grid.height; ++r)
            for (std::size_t c = 0; c < s.grid.width / 2; ++c) req.mask->values[r * s.grid.width + c] = 0;
        req.prior_seed = req.decoder_seed = i;
        req.prior = s.prior;
        req.decoder = s.decoder;
        req.method = i % 2 ? StructuralMode::sdedit : StructuralMode::rddim;
        const ImageGrid out = preditor_edit(req, m.prior, m.decoder, m.space).image;
        bool same = true;
        for (std::size_t p = 0; p < req.mask->values.size(); ++p) {
            if (!req.mask->values[p] && out.values[p] != cases[i].base.values[p]) same = false;
        }
        ok_mask += same;

        const Vector z = counter_normal_vector(i, Stream::evaluation, 0, m.decoder.state_dim());
        const Conditioning cond = decoder_condition(zb);
        ok_cfg += bit_equal(guided_epsilon(m.decoder, z, 400, cond, 1.0), m.decoder.predict(z, 400, cond));
    }
    const bool pass = ok_c == total && ok_s == total && ok_mask == total && ok_cfg == total;
    return {pass, fmt("c=0 %d/%d, s=0 %d/%d, mask=0 pixels %d/%d, CFG w=1 %d/%d bitwise", ok_c, total, ok_s, total,
                      ok_mask, total, ok_cfg, total)};
}

// ---- 4: finite-difference gradient check ----

Outcome gradient_check() {
    double worst = 0.0;
    int probes = 0;
    for (bool skip : {false, true}) {
        DenoiserShape shape;
        shape.state_dim = 5;
        shape.cond_dim = 8;
        shape.time_features = 6;
        shape.hidden = 7;
        shape.gaussian_skip = skip;
        DenoiserModel model(shape, default_schedule(), 0.1);
        model.initialize(skip ? 11 : 10);
        Vector params(model.params().begin(), model.params().end());
        CounterRng rng(skip ? 21 : 20, Stream::evaluation);
        for (double& p : params) p += 0.1 * rng.normal();
        if (skip) model.set_skip_statistics(Vector(5, 0.2), Vector(5, 0.5));

        std::vector<TrainingExample> data;
        for (int n = 0; n < 6; ++n) {
            Vector x(5), e(8);
            for (double& v : x) v = rng.normal();
            for (double& v : e) v = rng.normal();
            data.push_back({x, n % 3 == 0 ? Conditioning::none() : Conditioning::on(ConceptEmbedding::unit(e))});
        }
        auto batch = detail::allocate_batch(model, data.size());
        for (std::size_t n = 0; n < data.size(); ++n) {
            Vector eps(5);
            for (double& v : eps) v = rng.normal();
            detail::fill_column(model, data[n], static_cast<Timestep>(1 + rng.below(1000)), eps, false, batch,
                                static_cast<Eigen::Index>(n));
        }
        Vector grad(params.size()), scratch(params.size());
        model.loss_and_gradient(params, batch, grad);
        for (int k = 0; k < 60; ++k) {
            const std::size_t idx = k < 5 && skip ? params.size() - 5 + k : rng.below(params.size());
            constexpr double h = 1e-5;
            Vector p = params;
            p[idx] += h;
            const double up = model.loss_and_gradient(p, batch, scratch);
            p[idx] -= 2 * h;
            const double down = model.loss_and_gradient(p, batch, scratch);
            const double numeric = (up - down) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[idx]), 1e-8});
            worst = std::max(worst, std::abs(numeric - grad[idx]) / denom);
            ++probes;
        }
    }
    return {worst < 1e-4, fmt("max relative error %.2e over %d random parameter probes", worst, probes)};
}

// ---- 5 and 6: sweep trends ----

Outcome sweep_trends(const ToyModels& m, const ToySettings& s, Outcome& interior) {
    const auto cases = shape_flip_cases(10, 99, s.grid);
    std::vector<std::uint64_t> seeds(50);
    std::iota(seeds.begin(), seeds.end(), 0);
    const std::vector<double> c_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    SweepOptions opts;
    opts.prior = s.prior;
    opts.decoder = s.decoder;
    const auto rows = sweep_curves(m.prior, m.decoder, m.space, cases, c_grid, {0.4}, seeds, opts);
    std::fputs(sweep_csv(rows).c_str(), stdout);
    const SweepTrend t = sweep_trend(rows, 0.4, 0.3);
    interior = {t.best_interior,
                fmt("fidelity x relevance peaks at c=%.1f on the grid 0..1 (s=0.4)", t.best_c)};
    const bool pass = t.relevance_spearman >= 0.6 && t.base_cosine_spearman <= -0.6;
    return {pass, fmt("s=0.4, 10 bases x 50 seeds, c in [0.3, 1]: spearman(relevance)=%+.3f, "
                      "spearman(base cosine)=%+.3f, spearman(fidelity)=%+.3f",
                      t.relevance_spearman, t.base_cosine_spearman, t.fidelity_spearman)};
}

// ---- 7: rddim vs sdedit fidelity ----

Outcome method_ordering(const ToyModels& m, const ToySettings& s) {
    const auto cases = shape_flip_cases(10, 99, s.grid);
    std::string detail;
    bool pass = true;
    for (double sv : {0.4, 0.6}) {
        Vector diff, fr, fs;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            EditRequest req;
            req.base = cases[seed % cases.size()].base;
            req.prompt = cases[seed % cases.size()].prompt;
            req.s = sv;
            req.prior_seed = req.decoder_seed = seed;
            req.prior = s.prior;
            req.decoder = s.decoder;
            req.method = StructuralMode::rddim;
            const double a = preditor_edit(req, m.prior, m.decoder, m.space).trace.fidelity;
            req.method = StructuralMode::sdedit;
            const double b = preditor_edit(req, m.prior, m.decoder, m.space).trace.fidelity;
            fr.push_back(a);
            fs.push_back(b);
            diff.push_back(a - b);
        }
        const double t = mean(diff) / (stddev(diff) / std::sqrt(static_cast<double>(diff.size())));
        pass = pass && mean(fr) >= mean(fs) && t >= 2.0;
        detail += fmt("%ss=%.1f rddim %.4f vs sdedit %.4f, paired t=%.2f", detail.empty() ? "" : "; ", sv, mean(fr),
                      mean(fs), t);
    }
    return {pass, detail + " (20 seeds, need t >= 2)"};
}

// ---- 8: preditor vs prior_rddim ----

Outcome ablation_separation(const ToyModels& m, const ToySettings& s) {
    const auto cases = shape_flip_cases(10, 99, s.grid);
    std::vector<std::uint64_t> seeds(20);
    std::iota(seeds.begin(), seeds.end(), 0);
    AblationOptions opts;
    opts.prior = s.prior;
    opts.decoder = s.decoder;
    const auto rows = ablation_battery(m.prior, m.decoder, m.space, cases, {Variant::preditor, Variant::prior_rddim},
                                       seeds, opts);
    const auto sum = summarize_ablation(rows);
    const VariantSummary& p = sum[0];
    const VariantSummary& q = sum[1];
    const double rel_gap = std::abs(p.relevance_mean - q.relevance_mean) / q.relevance_mean;
    const bool pass = rel_gap <= 0.10 && p.fidelity_mean > q.fidelity_mean;
    return {pass, fmt("c=0.65 s=0.45, 20 paired seeds: fidelity %.4f vs %.4f (paired t=%.2f); relevance %.4f vs "
                      "%.4f (gap %.1f%%, band 10%%)",
                      p.fidelity_mean, q.fidelity_mean, p.paired_fidelity_t.value_or(0.0), p.relevance_mean,
                      q.relevance_mean, 100.0 * rel_gap)};
}

// ---- 9: end-to-end disc -> square ----

Outcome semantic_edit(const ToyModels& m, const ToySettings& s) {
    SceneFactors f;
    f.shape = Shape::disc;
    const ImageGrid base = render(f, s.grid);
    ToyPrompt square;
    square.add(Concept::square);
    EditMask mask(s.grid.height, s.grid.width, 0);
    for (std::size_t r = 2; r < 14; ++r)
        for (std::size_t c = 2; c < 14; ++c) mask.values[r * s.grid.width + c] = 1;
    int plain = 0, masked = 0, preserved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EditRequest req;
        req.base = base;
        req.prompt = square;
        req.prior_seed = req.decoder_seed = seed;
        req.prior = s.prior;
        req.decoder = s.decoder;
        plain += classify_square(preditor_edit(req, m.prior, m.decoder, m.space).image);
        req.mask = mask;
        const ImageGrid out = preditor_edit(req, m.prior, m.decoder, m.space).image;
        masked += classify_square(out);
        bool same = true;
        for (std::size_t p = 0; p < mask.values.size(); ++p) {
            if (!mask.values[p] && out.values[p] != base.values[p]) same = false;
        }
        preserved += same;
    }
    const bool pass = plain > 10 && masked > 10 && preserved == 20;
    return {pass, fmt("labelled square: %d/20 unmasked, %d/20 with a 12x12 editable window; masked-off pixels "
                      "bit-equal in %d/20",
                      plain, masked, preserved)};
}

// ---- 10: determinism of every command ----

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

int cli(std::vector<std::string> args) {
    std::vector<const char*> argv = {"preditor"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (rc != 0) std::fprintf(stderr, "command failed (%d): %s\n", rc, err.str().c_str());
    return rc;
}

Outcome determinism(const fs::path& models) {
    const fs::path root = fs::temp_directory_path() / ("preditor_determinism_" + std::to_string(std::random_device{}()));
    fs::create_directories(root);
    {
        std::ofstream os(root / "tiny.conf");
        os << "[dataset]\nsize = 64\n[prior]\nepochs = 3\nhidden = 16\n[decoder]\nepochs = 3\nhidden = 16\n";
    }
    const std::string m = models.string();
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"train", {"train", "--config", (root / "tiny.conf").string()}},
        {"dataset", {"dataset", "--n", "3"}},
        {"sweep", {"sweep", "--models", m, "--set", "sweep.bases=2", "--set", "sweep.seeds=2", "--set",
                   "sweep.c_grid=0,0.5,1", "--set", "sweep.s_values=0.4"}},
        {"ablate", {"ablate", "--models", m, "--set", "ablate.seeds=3", "--set", "ablate.bases=2"}},
    };
    int identical = 0, compared = 0;
    std::string mismatch;
    for (const auto& [name, args] : commands) {
        for (const char* run : {"a", "b"}) {
            auto a = args;
            a.insert(a.end(), {"--out", (root / (name + "_" + run)).string()});
            // Parallel and serial collection must agree as well.
            a.insert(a.end(), {"--workers", run[0] == 'a' ? "1" : "3"});
            if (cli(a) != 0) return {false, "command '" + name + "' failed"};
        }
        for (const auto& entry : fs::directory_iterator(root / (name + "_a"))) {
            ++compared;
            const fs::path other = root / (name + "_b") / entry.path().filename();
            if (fs::exists(other) && slurp(entry.path()) == slurp(other)) ++identical;
            else mismatch += " " + name + "/" + entry.path().filename().string();
        }
    }
    // edit needs an input image from the dataset run
    for (const char* run : {"a", "b"}) {
        if (cli({"edit", "--models", m, "--base", (root / "dataset_a" / "img_00000.pgm").string(), "--prompt",
                 "square", "--seed", "5", "--visualize", "--out", (root / (std::string("edit_") + run)).string()}) != 0) {
            return {false, "command 'edit' failed"};
        }
    }
    for (const auto& entry : fs::directory_iterator(root / "edit_a")) {
        ++compared;
        if (slurp(entry.path()) == slurp(root / "edit_b" / entry.path().filename())) ++identical;
        else mismatch += " edit/" + entry.path().filename().string();
    }
    fs::remove_all(root);
    return {identical == compared && compared > 0,
            fmt("%d/%d output files byte-identical across reruns of train, dataset, sweep, ablate, edit%s", identical,
                compared, mismatch.empty() ? "" : (" (differs:" + mismatch + ")").c_str())};
}

/// Copies the cached models to root/current unless it already holds them.
void publish_current(const ToySettings& s, const fs::path& root) {
    const ToyModels m = cached_toy_models(s, root);
    const fs::path current = root / "current";
    const std::string fingerprint = s.training_fingerprint() + "\n";
    if (slurp(current / "fingerprint.txt") == fingerprint) return;
    const fs::path tmp = root / ("current.tmp" + std::to_string(std::random_device{}()));
    save_toy_models(m, tmp);
    std::ofstream(tmp / "fingerprint.txt") << fingerprint;
    fs::remove_all(current);
    fs::rename(tmp, current);
}

}  // namespace

int main(int argc, char** argv) {
    const ToySettings settings;
    if (argc == 3 && std::string(argv[1]) == "--prepare") {
        try {
            const auto t0 = Clock::now();
            publish_current(settings, argv[2]);
            std::printf("toy models ready in %s/current [%.1fs]\n", argv[2], seconds_since(t0));
            return 0;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "prepare failed: %s\n", e.what());
            return 1;
        }
    }

    run_criterion(1, "oracle agreement", oracle_agreement);
    run_criterion(2, "inversion round trip", round_trip);
    const auto t_train = Clock::now();
    ToyModels models;
    try {
        models = cached_toy_models(settings, PREDITOR_MODEL_CACHE);
    } catch (const std::exception& e) {
        std::printf("FAIL toy model training: %s\n", e.what());
        return 1;
    }
    std::printf("toy models ready [%.1fs]\n", seconds_since(t_train));

    run_criterion(3, "endpoint identities", [&] { return endpoint_identities(models, settings); });
    run_criterion(4, "gradient check", gradient_check);
    Outcome interior;
    const auto t5 = Clock::now();
    run_criterion(5, "relevance/fidelity trend", [&] {
        Outcome o = sweep_trends(models, settings, interior);
        o.detail += fmt("; sweep took %.0fs (limit 300s)", seconds_since(t5));
        o.pass = o.pass && seconds_since(t5) < 300.0;
        return o;
    });
    run_criterion(6, "interior optimum", [&] { return interior; });
    run_criterion(7, "method ordering", [&] { return method_ordering(models, settings); });
    run_criterion(8, "ablation separation", [&] { return ablation_separation(models, settings); });
    run_criterion(9, "end-to-end semantic edit", [&] { return semantic_edit(models, settings); });
    run_criterion(10, "determinism", [&] {
        publish_current(settings, PREDITOR_MODEL_CACHE);
        return determinism(fs::path(PREDITOR_MODEL_CACHE) / "current");
    });

    std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
    return failures == 0 ? 0 : 1;
}
