// SPDX-License-Identifier: Apache-2.0
#pragma once

// The toy world as one configurable unit: dataset, joint space, schedule,
// both training recipes and the sampling options used at edit time. Built
// from a Config so the CLI, the tests and the acceptance run share defaults.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <thread>

#include "preditor/config.hpp"
#include "preditor/pipeline.hpp"

namespace preditor {

struct ToySettings {
    GridShape grid;
    std::size_t dataset_size = 1024;
    std::uint64_t dataset_seed = 1;
    int jitter = 2;

    std::size_t dim = 8;
    std::uint64_t anchor_seed = 7;

    int horizon = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;

    TrainHyperparams prior_train = default_prior_train();
    TrainHyperparams decoder_train = default_decoder_train();
    double prior_state_scale = 0.0;  // 0 selects sqrt(dim)

    PriorSampling prior;
    DecoderSampling decoder;

    static TrainHyperparams default_prior_train() {
        TrainHyperparams hp;
        hp.epochs = 100;
        hp.batch = 64;
        hp.learning_rate = 1e-3;
        hp.final_lr_fraction = 0.05;
        hp.optimizer = Optimizer::adam;
        hp.hidden = 64;
        hp.seed = 3;
        return hp;
    }

    static TrainHyperparams default_decoder_train() {
        TrainHyperparams hp;
        hp.epochs = 800;
        hp.batch = 64;
        hp.learning_rate = 1e-3;
        hp.final_lr_fraction = 0.05;
        hp.optimizer = Optimizer::adam;
        hp.hidden = 256;
        hp.cond_noise = 0.25;
        hp.gaussian_skip = true;
        hp.seed = 4;
        return hp;
    }

    ToySettings() {
        prior.eta = 1.0;
        prior.state_scale = sqrt_dim_scale(dim);
    }

    double state_scale() const { return prior_state_scale > 0.0 ? prior_state_scale : sqrt_dim_scale(dim); }

    NoiseSchedule schedule() const { return make_schedule(ScheduleKind::linear, horizon, beta_min, beta_max); }

    /// Keys this struct reads from a Config.
    static std::set<std::string> keys() {
        std::set<std::string> k = {"dataset.size", "dataset.seed",     "dataset.jitter",   "dataset.height",
                                   "dataset.width", "dataset.channels", "space.dim",        "space.anchor_seed",
                                   "schedule.horizon", "schedule.beta_min", "schedule.beta_max", "prior.state_scale"};
        for (const char* model : {"prior", "decoder"}) {
            for (const char* key : {"hidden", "time_features", "epochs", "batch", "learning_rate", "final_lr_fraction",
                                    "optimizer", "cond_dropout", "cond_noise", "seed", "gaussian_skip", "steps",
                                    "guidance", "eta"}) {
                k.insert(std::string(model) + "." + key);
            }
        }
        return k;
    }

    static ToySettings from_config(const Config& cfg) {
        ToySettings s;
        s.dataset_size = to_size(cfg, "dataset.size", s.dataset_size, 1);
        s.dataset_seed = cfg.get_u64("dataset.seed", s.dataset_seed);
        s.jitter = static_cast<int>(bounded(cfg, "dataset.jitter", s.jitter, 0, 8));
        s.grid.height = to_size(cfg, "dataset.height", s.grid.height, 4);
        s.grid.width = to_size(cfg, "dataset.width", s.grid.width, 4);
        s.grid.channels = to_size(cfg, "dataset.channels", s.grid.channels, 1);
        if (s.grid.channels != 1 && s.grid.channels != 3) throw ParseError("dataset.channels", "must be 1 or 3");
        s.dim = to_size(cfg, "space.dim", s.dim, kAllConcepts.size() + 1);
        s.anchor_seed = cfg.get_u64("space.anchor_seed", s.anchor_seed);
        s.horizon = static_cast<int>(bounded(cfg, "schedule.horizon", s.horizon, 1, 100000));
        s.beta_min = cfg.get_double("schedule.beta_min", s.beta_min);
        s.beta_max = cfg.get_double("schedule.beta_max", s.beta_max);
        if (!(s.beta_min > 0.0 && s.beta_min <= s.beta_max && s.beta_max < 1.0)) {
            throw ParseError("schedule.beta_min", "need 0 < beta_min <= beta_max < 1");
        }
        s.prior_state_scale = cfg.get_double("prior.state_scale", 0.0);
        if (s.prior_state_scale < 0.0) throw ParseError("prior.state_scale", "must be >= 0 (0 selects sqrt(dim))");
        read_train(cfg, "prior", s.prior_train);
        read_train(cfg, "decoder", s.decoder_train);
        s.prior.n_steps = static_cast<int>(bounded(cfg, "prior.steps", s.prior.n_steps, 1, s.horizon));
        s.prior.guidance = cfg.get_double("prior.guidance", s.prior.guidance);
        s.prior.eta = unit_interval(cfg, "prior.eta", s.prior.eta);
        s.prior.state_scale = s.state_scale();
        s.decoder.n_steps = static_cast<int>(bounded(cfg, "decoder.steps", s.decoder.n_steps, 1, s.horizon));
        s.decoder.guidance = cfg.get_double("decoder.guidance", s.decoder.guidance);
        s.decoder.eta = unit_interval(cfg, "decoder.eta", s.decoder.eta);
        return s;
    }

    /// Canonical description of everything that determines the trained models.
    std::string training_fingerprint() const {
        std::ostringstream os;
        os << std::setprecision(17) << "grid " << grid.height << 'x' << grid.width << 'x' << grid.channels << " n "
           << dataset_size << " seed " << dataset_seed << " jitter " << jitter << " dim " << dim << " anchors "
           << anchor_seed << " T " << horizon << ' ' << beta_min << ' ' << beta_max << " scale " << state_scale();
        for (const TrainHyperparams* hp : {&prior_train, &decoder_train}) {
            os << " | " << hp->epochs << ' ' << hp->batch << ' ' << hp->learning_rate << ' ' << hp->final_lr_fraction
               << ' ' << hp->cond_dropout << ' ' << hp->cond_noise << ' ' << hp->seed << ' ' << hp->hidden << ' '
               << hp->time_features << ' ' << hp->gaussian_skip << ' ' << static_cast<int>(hp->optimizer);
        }
        return os.str();
    }

private:
    static long long bounded(const Config& cfg, const std::string& key, long long fallback, long long lo, long long hi) {
        const long long v = cfg.get_int(key, fallback);
        if (v < lo || v > hi) {
            throw ParseError(key, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + "]");
        }
        return v;
    }

    static std::size_t to_size(const Config& cfg, const std::string& key, std::size_t fallback, long long lo) {
        return static_cast<std::size_t>(bounded(cfg, key, static_cast<long long>(fallback), lo, 1LL << 32));
    }

    static double unit_interval(const Config& cfg, const std::string& key, double fallback) {
        const double v = cfg.get_double(key, fallback);
        if (!(v >= 0.0 && v <= 1.0)) throw ParseError(key, "must lie in [0, 1]");
        return v;
    }

    static void read_train(const Config& cfg, const std::string& model, TrainHyperparams& hp) {
        const std::string p = model + ".";
        hp.hidden = to_size(cfg, p + "hidden", hp.hidden, 1);
        hp.time_features = to_size(cfg, p + "time_features", hp.time_features, 2);
        if (hp.time_features % 2 != 0) throw ParseError(p + "time_features", "must be even");
        hp.epochs = static_cast<int>(bounded(cfg, p + "epochs", hp.epochs, 1, 1000000));
        hp.batch = to_size(cfg, p + "batch", hp.batch, 1);
        hp.learning_rate = cfg.get_double(p + "learning_rate", hp.learning_rate);
        if (!(hp.learning_rate > 0.0)) throw ParseError(p + "learning_rate", "must be positive");
        hp.final_lr_fraction = cfg.get_double(p + "final_lr_fraction", hp.final_lr_fraction);
        if (!(hp.final_lr_fraction > 0.0 && hp.final_lr_fraction <= 1.0)) {
            throw ParseError(p + "final_lr_fraction", "must lie in (0, 1]");
        }
        const std::string opt = cfg.get_string(p + "optimizer", hp.optimizer == Optimizer::adam ? "adam" : "sgd");
        if (opt == "adam") hp.optimizer = Optimizer::adam;
        else if (opt == "sgd") hp.optimizer = Optimizer::sgd;
        else throw ParseError(p + "optimizer", "expected 'sgd' or 'adam', got '" + opt + "'");
        hp.cond_dropout = unit_interval(cfg, p + "cond_dropout", hp.cond_dropout);
        hp.cond_noise = cfg.get_double(p + "cond_noise", hp.cond_noise);
        if (hp.cond_noise < 0.0) throw ParseError(p + "cond_noise", "must be >= 0");
        hp.seed = cfg.get_u64(p + "seed", hp.seed);
        hp.gaussian_skip = cfg.get_bool(p + "gaussian_skip", hp.gaussian_skip);
    }
};

struct ToyModels {
    JointEmbeddingSpace space;
    DenoiserModel prior;
    DenoiserModel decoder;
    TrainingLog prior_log;
    TrainingLog decoder_log;
};

/// Calibrated joint space over the settings' dataset.
inline JointEmbeddingSpace build_space(const ToySettings& s, const std::vector<DatasetItem>& items) {
    JointEmbeddingSpace space(s.dim, s.anchor_seed, s.grid);
    space.calibrate(items);
    return space;
}

/// Trains both models; the two runs are independent and go on separate threads.
inline ToyModels train_toy_models(const ToySettings& s) {
    const auto items = generate_dataset(s.dataset_size, s.dataset_seed, s.grid, s.jitter);
    ToyModels m;
    m.space = build_space(s, items);
    const NoiseSchedule schedule = s.schedule();
    const auto prior_data = prior_training_set(m.space, items, s.state_scale());
    const auto decoder_data = decoder_training_set(m.space, items);
    std::exception_ptr prior_error;
    {
        std::jthread prior_thread([&] {
            try {
                m.prior = train_denoiser(prior_data, schedule, s.prior_train, &m.prior_log);
            } catch (...) {
                prior_error = std::current_exception();
            }
        });
        m.decoder = train_denoiser(decoder_data, schedule, s.decoder_train, &m.decoder_log);
    }
    if (prior_error) std::rethrow_exception(prior_error);
    return m;
}

inline void write_training_log(const TrainingLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot write " + path);
    os << "epoch,loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) os << e << ',' << log.epoch_loss[e] << '\n';
}

inline TrainingLog read_training_log(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    TrainingLog log;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError(path, "malformed training log row '" + line + "'");
        log.epoch_loss.push_back(std::stod(line.substr(comma + 1)));
    }
    return log;
}

inline constexpr const char* kPriorFile = "prior.bin";
inline constexpr const char* kDecoderFile = "decoder.bin";
inline constexpr const char* kSpaceFile = "space.txt";
inline constexpr const char* kPriorLogFile = "prior_log.csv";
inline constexpr const char* kDecoderLogFile = "decoder_log.csv";

/// Writes the five model artefacts into `dir` and returns their paths.
inline std::vector<std::string> save_toy_models(const ToyModels& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::vector<std::string> paths = {(dir / kPriorFile).string(), (dir / kDecoderFile).string(),
                                            (dir / kSpaceFile).string(), (dir / kPriorLogFile).string(),
                                            (dir / kDecoderLogFile).string()};
    m.prior.save(paths[0]);
    m.decoder.save(paths[1]);
    m.space.save(paths[2]);
    write_training_log(m.prior_log, paths[3]);
    write_training_log(m.decoder_log, paths[4]);
    return paths;
}

inline ToyModels load_toy_models(const std::filesystem::path& dir) {
    ToyModels m;
    m.prior = DenoiserModel::load((dir / kPriorFile).string());
    m.decoder = DenoiserModel::load((dir / kDecoderFile).string());
    m.space = JointEmbeddingSpace::load((dir / kSpaceFile).string());
    if (std::filesystem::exists(dir / kPriorLogFile)) m.prior_log = read_training_log((dir / kPriorLogFile).string());
    if (std::filesystem::exists(dir / kDecoderLogFile)) {
        m.decoder_log = read_training_log((dir / kDecoderLogFile).string());
    }
    return m;
}

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Loads the models for `s` from cache_root/<fingerprint hash>, training and
/// publishing them first if absent. Publication writes a private directory
/// and renames it into place, so concurrent callers never see partial files.
inline ToyModels cached_toy_models(const ToySettings& s, const std::filesystem::path& cache_root) {
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx", static_cast<unsigned long long>(fnv1a(s.training_fingerprint())));
    const std::filesystem::path dir = cache_root / name;
    if (std::filesystem::exists(dir / kDecoderLogFile)) return load_toy_models(dir);

    ToyModels m = train_toy_models(s);
    std::filesystem::create_directories(cache_root);
    const auto tmp = cache_root / (std::string(name) + ".tmp" +
                                   std::to_string(std::random_device{}()));
    std::filesystem::remove_all(tmp);
    save_toy_models(m, tmp);
    {
        std::ofstream os(tmp / "fingerprint.txt");
        os << s.training_fingerprint() << '\n';
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir, ec);
    if (ec) std::filesystem::remove_all(tmp);  // another process won the race; its files are identical
    return m;
}

}  // namespace preditor
