// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line harness: train, edit, sweep, ablate, dataset. Settings come
// from built-in defaults, then the --config file, then --set overrides, then
// dedicated flags. Every command writes manifest.json naming its outputs.
//
// Exit codes: 0 success, 1 usage/parse/IO error, 2 --check property failure,
// 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "preditor/sweep.hpp"
#include "preditor/toy.hpp"

namespace preditor::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kCheckFailed = 2, kNumeric = 3 };

class CheckFailure : public Error {
public:
    using Error::Error;
};

inline std::set<std::string> known_keys() {
    std::set<std::string> k = ToySettings::keys();
    for (const char* key : {"edit.c", "edit.s", "edit.method", "edit.variant", "edit.prior_seed", "edit.decoder_seed",
                            "sweep.bases", "sweep.base_seed", "sweep.seeds", "sweep.c_grid", "sweep.s_values",
                            "sweep.method", "sweep.c_min", "ablate.bases", "ablate.base_seed", "ablate.seeds",
                            "ablate.variants", "ablate.c", "ablate.s", "run.seed", "run.workers", "run.models"}) {
        k.insert(key);
    }
    return k;
}

/// Everything the commands read, resolved from a Config.
struct RunSettings {
    ToySettings toy;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    std::string models = "models";

    double edit_c = 0.65;
    double edit_s = 0.45;
    StructuralMode edit_method = StructuralMode::rddim;
    Variant edit_variant = Variant::preditor;
    std::optional<std::uint64_t> edit_prior_seed;
    std::optional<std::uint64_t> edit_decoder_seed;

    std::size_t sweep_bases = 10;
    std::uint64_t sweep_base_seed = 99;
    std::size_t sweep_seeds = 50;
    std::vector<double> c_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> s_values = {0.4, 0.6};
    StructuralMode sweep_method = StructuralMode::rddim;
    double sweep_c_min = 0.3;

    std::size_t ablate_bases = 10;
    std::uint64_t ablate_base_seed = 99;
    std::size_t ablate_seeds = 20;
    std::vector<Variant> ablate_variants = {kAllVariants.begin(), kAllVariants.end()};
    double ablate_c = 0.65;
    double ablate_s = 0.45;

    static RunSettings from_config(const Config& cfg) {
        RunSettings r;
        r.toy = ToySettings::from_config(cfg);
        r.seed = cfg.get_u64("run.seed", r.seed);
        r.workers = static_cast<std::size_t>(cfg.get_u64("run.workers", r.workers));
        r.models = cfg.get_string("run.models", r.models);

        r.edit_c = strength(cfg, "edit.c", r.edit_c);
        r.edit_s = strength(cfg, "edit.s", r.edit_s);
        r.edit_method = mode(cfg, "edit.method", r.edit_method);
        if (cfg.has("edit.variant")) r.edit_variant = variant(cfg, "edit.variant", cfg.get_string("edit.variant", ""));
        if (cfg.has("edit.prior_seed")) r.edit_prior_seed = cfg.get_u64("edit.prior_seed", 0);
        if (cfg.has("edit.decoder_seed")) r.edit_decoder_seed = cfg.get_u64("edit.decoder_seed", 0);

        r.sweep_bases = count(cfg, "sweep.bases", r.sweep_bases);
        r.sweep_base_seed = cfg.get_u64("sweep.base_seed", r.sweep_base_seed);
        r.sweep_seeds = count(cfg, "sweep.seeds", r.sweep_seeds);
        r.c_grid = strengths(cfg, "sweep.c_grid", r.c_grid);
        r.s_values = strengths(cfg, "sweep.s_values", r.s_values);
        r.sweep_method = mode(cfg, "sweep.method", r.sweep_method);
        r.sweep_c_min = strength(cfg, "sweep.c_min", r.sweep_c_min);

        r.ablate_bases = count(cfg, "ablate.bases", r.ablate_bases);
        r.ablate_base_seed = cfg.get_u64("ablate.base_seed", r.ablate_base_seed);
        r.ablate_seeds = count(cfg, "ablate.seeds", r.ablate_seeds);
        if (cfg.has("ablate.variants")) {
            r.ablate_variants.clear();
            std::stringstream ss(cfg.get_string("ablate.variants", ""));
            std::string item;
            while (std::getline(ss, item, ',')) {
                const Variant v = variant(cfg, "ablate.variants", detail::trim(item));
                if (std::find(r.ablate_variants.begin(), r.ablate_variants.end(), v) != r.ablate_variants.end()) {
                    throw ParseError("ablate.variants", "variant listed twice");
                }
                r.ablate_variants.push_back(v);
            }
            if (r.ablate_variants.empty()) throw ParseError("ablate.variants", "expected at least one variant");
        }
        r.ablate_c = strength(cfg, "ablate.c", r.ablate_c);
        r.ablate_s = strength(cfg, "ablate.s", r.ablate_s);
        return r;
    }

    std::vector<std::uint64_t> seed_list(std::size_t n) const {
        std::vector<std::uint64_t> out(n);
        for (std::size_t k = 0; k < n; ++k) out[k] = seed + k;
        return out;
    }

private:
    static double strength(const Config& cfg, const std::string& key, double fallback) {
        const double v = cfg.get_double(key, fallback);
        if (!(v >= 0.0 && v <= 1.0)) throw ParseError(key, "must lie in [0, 1]");
        return v;
    }

    static std::vector<double> strengths(const Config& cfg, const std::string& key, std::vector<double> fallback) {
        auto v = cfg.get_doubles(key, std::move(fallback));
        for (double x : v) {
            if (!(x >= 0.0 && x <= 1.0)) throw ParseError(key, "every value must lie in [0, 1]");
        }
        return v;
    }

    static std::size_t count(const Config& cfg, const std::string& key, std::size_t fallback) {
        const long long v = cfg.get_int(key, static_cast<long long>(fallback));
        if (v < 1) throw ParseError(key, "must be >= 1");
        return static_cast<std::size_t>(v);
    }

    static StructuralMode mode(const Config& cfg, const std::string& key, StructuralMode fallback) {
        if (!cfg.has(key)) return fallback;
        try {
            return parse_mode(cfg.get_string(key, ""));
        } catch (const ParseError& e) {
            throw ParseError(key, e.what());
        }
    }

    static Variant variant(const Config&, const std::string& key, const std::string& name) {
        try {
            return parse_variant(name);
        } catch (const ParseError& e) {
            throw ParseError(key, e.what());
        }
    }
};

// ---- output helpers ----

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    if (!os) throw Error("failed writing " + path.string());
}

/// Paths are recorded relative to the output directory so two runs into
/// different directories produce identical manifests.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command, const Config& cfg,
                           const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j;
    j["command"] = command;
    nlohmann::ordered_json settings = nlohmann::ordered_json::object();
    // Thread count never changes results, so it stays out of the record.
    for (const auto& [k, v] : cfg.values())
        if (k != "run.workers") settings[k] = v;
    j["config"] = settings;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& p : outputs) files.push_back(std::filesystem::relative(p, out_dir).generic_string());
    files.push_back("manifest.json");
    j["outputs"] = files;
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
}

inline std::string trace_csv(const EditTrace& tr, const EditRequest& req) {
    std::ostringstream os;
    os << "key,value\n" << std::setprecision(17);
    os << "variant," << variant_name(tr.variant) << "\nmethod," << mode_name(tr.method) << "\nprompt,"
       << req.prompt.to_string() << "\nc," << req.c << "\ns," << req.s << "\nt_c," << tr.t_c << "\nt_s," << tr.t_s
       << "\nprior_seed," << req.prior_seed << "\ndecoder_seed," << req.decoder_seed << "\nprior_guidance,"
       << req.prior.guidance << "\ndecoder_guidance," << req.decoder.guidance << "\nmasked," << (req.mask ? 1 : 0)
       << "\nrelevance," << tr.relevance << "\nbase_cosine," << tr.base_cosine << "\nfidelity," << tr.fidelity
       << "\nlpips," << 1.0 - tr.fidelity << "\nstructure_distance," << tr.structure_distance
       << "\nembedding_relevance," << tr.embedding_relevance << "\nembedding_base_cosine," << tr.embedding_base_cosine
       << '\n';
    for (std::size_t i = 0; i < tr.z_b.dim(); ++i) os << "z_b_" << i << ',' << tr.z_b.values[i] << '\n';
    for (std::size_t i = 0; i < tr.z_e.dim(); ++i) os << "z_e_" << i << ',' << tr.z_e.values[i] << '\n';
    return os.str();
}

inline std::string prior_states_csv(const std::vector<LatentState>& states) {
    std::ostringstream os;
    os << "index,t";
    if (!states.empty()) {
        for (std::size_t i = 0; i < states.front().state.size(); ++i) os << ",v" << i;
    }
    os << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < states.size(); ++k) {
        os << k << ',' << states[k].t;
        for (double v : states[k].state) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

// ---- commands ----

struct Context {
    Config config{known_keys()};
    RunSettings settings;
    std::filesystem::path out = ".";
    bool check = false;
    std::ostream* log = &std::cout;
};

inline ToyModels require_models(const RunSettings& s) {
    const std::filesystem::path dir = s.models;
    for (const char* f : {kPriorFile, kDecoderFile, kSpaceFile}) {
        if (!std::filesystem::exists(dir / f)) {
            throw ParseError("run.models", "no trained models in '" + dir.string() + "' (missing " + f +
                                               "); run 'preditor train' first");
        }
    }
    ToyModels m = load_toy_models(dir);
    if (!(m.space.grid() == s.toy.grid)) throw DimensionError("model grid does not match dataset.height/width/channels");
    return m;
}

inline int cmd_train(const Context& ctx) {
    const ToySettings& s = ctx.settings.toy;
    *ctx.log << "training prior (" << s.prior_train.epochs << " epochs) and decoder (" << s.decoder_train.epochs
             << " epochs) on " << s.dataset_size << " renders\n";
    const ToyModels m = train_toy_models(s);
    std::filesystem::create_directories(ctx.out);
    const auto paths = save_toy_models(m, ctx.out);
    write_manifest(ctx.out, "train", ctx.config, paths);
    auto report = [&](const char* name, const TrainingLog& log) {
        *ctx.log << name << " loss " << log.epoch_loss.front() << " -> " << log.epoch_loss.back() << '\n';
        return log.epoch_loss.back() < log.epoch_loss.front();
    };
    const bool ok_prior = report("prior", m.prior_log);
    const bool ok_decoder = report("decoder", m.decoder_log);
    if (ctx.check && !(ok_prior && ok_decoder)) throw CheckFailure("final training loss is not below the initial loss");
    return kOk;
}

struct EditFlags {
    std::string base;
    std::string prompt;
    std::string mask;
    bool visualize = false;
};

inline int cmd_edit(const Context& ctx, const EditFlags& f) {
    const RunSettings& s = ctx.settings;
    const ToyModels m = require_models(s);
    EditRequest req;
    req.base = read_netpbm(f.base);
    if (!(req.base.shape == m.space.grid())) throw DimensionError("base image shape does not match the model grid");
    req.prompt = ToyPrompt::parse(f.prompt);
    req.c = s.edit_c;
    req.s = s.edit_s;
    req.method = s.edit_method;
    req.variant = s.edit_variant;
    if (!f.mask.empty()) req.mask = read_mask(f.mask);
    req.prior_seed = s.edit_prior_seed.value_or(s.seed);
    req.decoder_seed = s.edit_decoder_seed.value_or(s.seed);
    req.prior = s.toy.prior;
    req.decoder = s.toy.decoder;
    const EditResult res = ablation_variant(req, m.prior, m.decoder, m.space);

    std::filesystem::create_directories(ctx.out);
    std::vector<std::string> outputs = {(ctx.out / "edited.pgm").string(), (ctx.out / "trace.csv").string(),
                                        (ctx.out / "prior_states.csv").string()};
    if (res.image.shape.channels == 3) outputs[0] = (ctx.out / "edited.ppm").string();
    write_netpbm(res.image, outputs[0]);
    write_text(outputs[1], trace_csv(res.trace, req));
    write_text(outputs[2], prior_states_csv(res.trace.prior_states));
    if (f.visualize) {
        outputs.push_back((ctx.out / "conceptual.pgm").string());
        write_netpbm(visualize_conceptual(m.decoder, m.space.grid(), res.trace.z_e, req.decoder_seed, req.decoder),
                     outputs.back());
    }
    write_manifest(ctx.out, "edit", ctx.config, outputs);
    *ctx.log << "relevance " << res.trace.relevance << " fidelity " << res.trace.fidelity << " label "
             << (classify_square(res.image) ? "square" : "disc") << '\n';
    if (ctx.check && req.mask) {
        for (std::size_t p = 0; p < req.mask->values.size(); ++p) {
            if (req.mask->values[p]) continue;
            for (std::size_t ch = 0; ch < req.base.shape.channels; ++ch) {
                const std::size_t i = p * req.base.shape.channels + ch;
                if (res.image.values[i] != req.base.values[i]) throw CheckFailure("masked-off pixel changed");
            }
        }
    }
    return kOk;
}

inline int cmd_sweep(const Context& ctx) {
    const RunSettings& s = ctx.settings;
    const ToyModels m = require_models(s);
    const auto cases = shape_flip_cases(s.sweep_bases, s.sweep_base_seed, s.toy.grid, s.toy.jitter);
    SweepOptions opts;
    opts.method = s.sweep_method;
    opts.prior = s.toy.prior;
    opts.decoder = s.toy.decoder;
    opts.workers = s.workers;
    const auto rows = sweep_curves(m.prior, m.decoder, m.space, cases, s.c_grid, s.s_values,
                                   s.seed_list(s.sweep_seeds), opts);
    std::filesystem::create_directories(ctx.out);
    const std::vector<std::string> outputs = {(ctx.out / "sweep.csv").string(), (ctx.out / "sweep.svg").string()};
    write_text(outputs[0], sweep_csv(rows));
    write_text(outputs[1], sweep_svg(rows));
    write_manifest(ctx.out, "sweep", ctx.config, outputs);

    std::vector<std::string> failures;
    for (double sv : s.s_values) {
        const SweepTrend t = sweep_trend(rows, sv, s.sweep_c_min);
        *ctx.log << "s=" << sv << " spearman(relevance, c)=" << t.relevance_spearman
                 << " spearman(fidelity, c)=" << t.fidelity_spearman
                 << " spearman(base_cosine, c)=" << t.base_cosine_spearman << " best c=" << t.best_c << '\n';
        if (t.points < 2) continue;
        if (t.relevance_spearman < 0.6) failures.push_back("relevance trend at s=" + std::to_string(sv));
        if (t.fidelity_spearman > -0.6) failures.push_back("fidelity trend at s=" + std::to_string(sv));
        if (t.base_cosine_spearman > -0.6) failures.push_back("base-cosine trend at s=" + std::to_string(sv));
        if (std::abs(sv - 0.4) < 1e-12 && !t.best_interior) failures.push_back("optimum not interior at s=0.4");
    }
    if (ctx.check && !failures.empty()) {
        std::string msg = "sweep trend check failed:";
        for (const auto& f : failures) msg += " [" + f + "]";
        throw CheckFailure(msg);
    }
    return kOk;
}

inline int cmd_ablate(const Context& ctx) {
    const RunSettings& s = ctx.settings;
    const ToyModels m = require_models(s);
    const auto cases = shape_flip_cases(s.ablate_bases, s.ablate_base_seed, s.toy.grid, s.toy.jitter);
    AblationOptions opts;
    opts.c = s.ablate_c;
    opts.s = s.ablate_s;
    opts.prior = s.toy.prior;
    opts.decoder = s.toy.decoder;
    opts.workers = s.workers;
    const auto rows = ablation_battery(m.prior, m.decoder, m.space, cases, s.ablate_variants,
                                       s.seed_list(s.ablate_seeds), opts);
    const auto summary = summarize_ablation(rows);
    std::filesystem::create_directories(ctx.out);
    const std::vector<std::string> outputs = {(ctx.out / "ablate.csv").string(),
                                              (ctx.out / "ablate_summary.csv").string()};
    write_text(outputs[0], ablation_csv(rows));
    write_text(outputs[1], ablation_summary_csv(summary));
    write_manifest(ctx.out, "ablate", ctx.config, outputs);
    for (const auto& v : summary) {
        *ctx.log << variant_name(v.variant) << " relevance " << v.relevance_mean << " fidelity " << v.fidelity_mean;
        if (v.paired_fidelity_mean) *ctx.log << " paired fidelity delta " << *v.paired_fidelity_mean;
        *ctx.log << '\n';
    }
    if (ctx.check) {
        for (const auto& v : summary) {
            if (v.variant == Variant::preditor && v.paired_fidelity_mean && *v.paired_fidelity_mean < 0.0) {
                throw CheckFailure("preditor fidelity is below prior_rddim on average");
            }
        }
    }
    return kOk;
}

inline int cmd_dataset(const Context& ctx, std::size_t n) {
    const ToySettings& s = ctx.settings.toy;
    const auto items = generate_dataset(n, s.dataset_seed, s.grid, s.jitter);
    const auto written = export_dataset(items, ctx.out);
    write_manifest(ctx.out, "dataset", ctx.config, written);
    *ctx.log << "wrote " << items.size() << " images to " << ctx.out.string() << '\n';
    return kOk;
}

/// Parses argv, runs one command and maps failures to exit codes. Errors go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Text-guided editing of toy images with a diffusion prior and decoder"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir = ".";
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string models;
    bool check = false;
    app.add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Evaluation seed (edit seeds, first sweep/ablation seed)");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--set", sets, "Override a configuration key: section.key=value (repeatable)");
    app.add_option("--workers", workers, "Worker threads for sweeps and ablations (0 = all cores)");
    app.add_option("--models", models, "Directory holding trained models");
    app.add_flag("--check", check, "Fail with exit code 2 if a property check fails");

    auto* train = app.add_subcommand("train", "Train prior and decoder; write models and loss logs");

    EditFlags ef;
    std::optional<double> c, s, guidance, prior_guidance;
    std::optional<std::uint64_t> prior_seed, decoder_seed;
    std::string method, variant;
    auto* edit = app.add_subcommand("edit", "Edit one image towards a prompt");
    edit->add_option("--base", ef.base, "Base image (PGM/PPM)")->required()->check(CLI::ExistingFile);
    edit->add_option("--prompt", ef.prompt, "Edit prompt, e.g. \"square\" or \"{square, dark}\"")->required();
    edit->add_option("--c", c, "Conceptual strength in [0, 1]");
    edit->add_option("--s", s, "Structural strength in [0, 1]");
    edit->add_option("--method", method, "rddim or sdedit");
    edit->add_option("--variant", variant, "preditor, prior_rddim, prior_sdedit or sdedit_only");
    edit->add_option("--mask", ef.mask, "Mask PGM; pixels >= 128 are editable")->check(CLI::ExistingFile);
    edit->add_option("--guidance", guidance, "Decoder guidance scale");
    edit->add_option("--prior-guidance", prior_guidance, "Prior guidance scale");
    edit->add_option("--prior-seed", prior_seed, "Prior seed (defaults to --seed)");
    edit->add_option("--decoder-seed", decoder_seed, "Decoder seed (defaults to --seed)");
    edit->add_flag("--visualize", ef.visualize, "Also decode z_e without the structural edit");

    auto* sweep = app.add_subcommand("sweep", "Metric-vs-c sweep: CSV table and SVG chart");
    auto* ablate = app.add_subcommand("ablate", "Compare the ablation variants over paired seeds");
    std::size_t n_images = 16;
    auto* dataset = app.add_subcommand("dataset", "Export synthetic renders as PGM files plus manifest.csv");
    dataset->add_option("--n", n_images, "Number of images")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        Context ctx;
        ctx.log = &out;
        ctx.check = check;
        ctx.out = out_dir;
        if (!config_path.empty()) ctx.config = Config::load(config_path, known_keys());
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ParseError(kv, "--set expects section.key=value");
            ctx.config.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
        }
        auto put = [&](const char* key, const auto& v) {
            if (!v) return;
            std::ostringstream os;
            os << std::setprecision(17) << *v;
            ctx.config.set(key, os.str());
        };
        put("run.seed", seed);
        put("run.workers", workers);
        if (!models.empty()) ctx.config.set("run.models", models);
        put("edit.c", c);
        put("edit.s", s);
        put("decoder.guidance", guidance);
        put("prior.guidance", prior_guidance);
        put("edit.prior_seed", prior_seed);
        put("edit.decoder_seed", decoder_seed);
        if (!method.empty()) ctx.config.set("edit.method", method);
        if (!variant.empty()) ctx.config.set("edit.variant", variant);
        ctx.settings = RunSettings::from_config(ctx.config);

        if (*train) return cmd_train(ctx);
        if (*edit) return cmd_edit(ctx, ef);
        if (*sweep) return cmd_sweep(ctx);
        if (*ablate) return cmd_ablate(ctx);
        if (*dataset) return cmd_dataset(ctx, n_images);
        err << "no command given\n";
        return kUsage;
    } catch (const CheckFailure& e) {
        err << "check failed: " << e.what() << '\n';
        return kCheckFailed;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace preditor::cli
