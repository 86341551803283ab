// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numbers>
#include <numeric>

#include "preditor/mlp_denoiser.hpp"

namespace preditor {

struct TrainingExample {
    Vector state;
    Conditioning cond;
};

enum class Optimizer { sgd, adam };

struct TrainHyperparams {
    int epochs = 20;
    std::size_t batch = 64;
    double learning_rate = 1e-2;
    double final_lr_fraction = 1.0;  // cosine decay to learning_rate * fraction; 1 keeps it constant
    double cond_dropout = 0.1;
    double cond_noise = 0.0;  // std of Gaussian jitter added to conditioning before renormalising
    std::uint64_t seed = 0;
    std::size_t hidden = 128;
    std::size_t time_features = 16;
    bool gaussian_skip = false;
    Optimizer optimizer = Optimizer::sgd;
};

struct TrainingLog {
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

namespace detail {

inline void fill_column(const DenoiserModel& model, const TrainingExample& ex, Timestep t,
                        std::span<const double> eps, bool drop_cond, DenoiserBatch& batch,
                        Eigen::Index col) {
    const NoiseSchedule& s = model.schedule();
    const Vector z = forward_noise(ex.state, eps, t, s);
    const Conditioning& cond = drop_cond ? Conditioning{} : ex.cond;
    model.write_input(z, t, cond, {batch.input.col(col).data(), static_cast<std::size_t>(batch.input.rows())});
    if (model.shape().gaussian_skip) {
        model.write_skip(z, t, {batch.skip.col(col).data(), static_cast<std::size_t>(batch.skip.rows())});
    }
    std::copy(eps.begin(), eps.end(), batch.target.col(col).data());
}

inline DenoiserBatch allocate_batch(const DenoiserModel& model, std::size_t count) {
    const auto b = static_cast<Eigen::Index>(count);
    const auto d = static_cast<Eigen::Index>(model.state_dim());
    DenoiserBatch batch;
    batch.input.resize(static_cast<Eigen::Index>(model.shape().input_dim()), b);
    batch.target.resize(d, b);
    if (model.shape().gaussian_skip) batch.skip.resize(d, b);
    return batch;
}

}  // namespace detail

/// Builds a batch with explicit timesteps and noise; used by gradient checks and
/// held-out evaluation.
inline detail::DenoiserBatch make_batch(const DenoiserModel& model, std::span<const TrainingExample> examples,
                                        std::span<const Timestep> timesteps,
                                        std::span<const Vector> noise) {
    require_same_dim(examples.size(), timesteps.size(), "make_batch timesteps");
    require_same_dim(examples.size(), noise.size(), "make_batch noise");
    auto batch = detail::allocate_batch(model, examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        detail::fill_column(model, examples[i], timesteps[i], noise[i], false, batch, static_cast<Eigen::Index>(i));
    }
    return batch;
}

inline void validate_dataset(std::span<const TrainingExample> data) {
    if (data.empty()) throw RangeError("training dataset is empty");
    const std::size_t d = data.front().state.size();
    if (d == 0) throw DimensionError("training states must be non-empty");
    std::size_t cond_dim = 0;
    for (const auto& ex : data) {
        require_same_dim(ex.state.size(), d, "training state");
        if (!ex.cond.present()) continue;
        if (cond_dim == 0) cond_dim = ex.cond.embedding->dim();
        require_same_dim(ex.cond.embedding->dim(), cond_dim, "training conditioning");
    }
}

/// Standard epsilon-prediction training: t ~ U{1..T}, eps ~ N(0, I),
/// minimise ||eps - eps_theta(sqrt(abar) x0 + sqrt(1 - abar) eps, t, cond)||^2.
inline DenoiserModel train_denoiser(std::span<const TrainingExample> data, const NoiseSchedule& schedule,
                                    const TrainHyperparams& hp, TrainingLog* log = nullptr) {
    validate_dataset(data);
    if (hp.epochs < 1 || hp.batch < 1) throw RangeError("epochs and batch must be >= 1");
    if (!(hp.learning_rate > 0.0)) throw RangeError("learning rate must be positive");
    if (!(hp.final_lr_fraction > 0.0 && hp.final_lr_fraction <= 1.0)) throw RangeError("final lr fraction outside (0, 1]");
    if (!(hp.cond_dropout >= 0.0 && hp.cond_dropout <= 1.0)) throw RangeError("cond dropout outside [0, 1]");
    if (!(hp.cond_noise >= 0.0)) throw RangeError("cond noise must be >= 0");

    DenoiserShape shape;
    shape.state_dim = data.front().state.size();
    shape.cond_dim = 0;
    for (const auto& ex : data) {
        if (ex.cond.present()) {
            shape.cond_dim = ex.cond.embedding->dim();
            break;
        }
    }
    shape.time_features = hp.time_features;
    shape.hidden = hp.hidden;
    shape.gaussian_skip = hp.gaussian_skip;

    DenoiserModel model(shape, schedule, hp.cond_dropout);
    model.initialize(hp.seed);
    if (shape.gaussian_skip) {
        Vector m(shape.state_dim, 0.0), v(shape.state_dim, 0.0);
        for (const auto& ex : data) {
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += ex.state[i];
        }
        for (double& x : m) x /= static_cast<double>(data.size());
        for (const auto& ex : data) {
            for (std::size_t i = 0; i < v.size(); ++i) v[i] += (ex.state[i] - m[i]) * (ex.state[i] - m[i]);
        }
        for (double& x : v) x = std::max(x / static_cast<double>(data.size()), 1e-4);
        model.set_skip_statistics(std::move(m), std::move(v));
    }

    const std::size_t n = data.size();
    const std::size_t d = shape.state_dim;
    const std::size_t batch_size = std::min(hp.batch, n);
    CounterRng rng(hp.seed, Stream::training);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    auto params = model.params();
    ParamVector grad(params.size());
    Vector m1, m2;
    if (hp.optimizer == Optimizer::adam) {
        m1.assign(params.size(), 0.0);
        m2.assign(params.size(), 0.0);
    }
    std::uint64_t step = 0;
    auto batch = detail::allocate_batch(model, batch_size);
    Vector eps(d);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        const double progress = hp.epochs > 1 ? static_cast<double>(epoch) / (hp.epochs - 1) : 0.0;
        const double lr = hp.learning_rate * (hp.final_lr_fraction +
                                              (1.0 - hp.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
            for (std::size_t b = 0; b < batch_size; ++b) {
                const auto t = static_cast<Timestep>(1 + rng.below(static_cast<std::uint64_t>(schedule.horizon)));
                for (double& e : eps) e = rng.normal();
                const bool drop = rng.bernoulli(hp.cond_dropout);
                const TrainingExample& ex = data[order[start + b]];
                if (hp.cond_noise > 0.0 && ex.cond.present()) {
                    Vector jittered = ex.cond.embedding->values;
                    for (double& v : jittered) v += hp.cond_noise * rng.normal();
                    const TrainingExample noisy{ex.state, Conditioning::on(ConceptEmbedding::unit(std::move(jittered)))};
                    detail::fill_column(model, noisy, t, eps, drop, batch, static_cast<Eigen::Index>(b));
                } else {
                    detail::fill_column(model, ex, t, eps, drop, batch, static_cast<Eigen::Index>(b));
                }
            }
            const double loss = model.loss_and_gradient(params, batch, grad);
            if (!std::isfinite(loss)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
            }
            ++step;
            if (hp.optimizer == Optimizer::sgd) {
                for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr * grad[p];
            } else {
                constexpr double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
                for (std::size_t p = 0; p < params.size(); ++p) {
                    m1[p] = b1 * m1[p] + (1.0 - b1) * grad[p];
                    m2[p] = b2 * m2[p] + (1.0 - b2) * grad[p] * grad[p];
                    params[p] -= lr * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + eps_adam);
                }
            }
            epoch_loss += loss;
            ++batches;
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    if (!all_finite(model.params())) throw NumericError("training produced non-finite parameters");
    return model;
}

/// Held-out epsilon MSE using seeded timesteps and noise. The constant-zero
/// predictor scores E||eps||^2 / d = 1 in expectation.
template <NoisePredictor P>
double heldout_mse(const P& model, std::span<const TrainingExample> data, const NoiseSchedule& schedule,
                   std::uint64_t seed, bool zero_predictor = false) {
    CounterRng rng(seed, Stream::evaluation);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ex : data) {
        const auto t = static_cast<Timestep>(1 + rng.below(static_cast<std::uint64_t>(schedule.horizon)));
        Vector eps(ex.state.size());
        for (double& e : eps) e = rng.normal();
        const Vector z = forward_noise(ex.state, eps, t, schedule);
        const Vector pred = zero_predictor ? Vector(eps.size(), 0.0) : model.predict(z, t, ex.cond);
        for (std::size_t i = 0; i < eps.size(); ++i) total += (pred[i] - eps[i]) * (pred[i] - eps[i]);
        count += eps.size();
    }
    return total / static_cast<double>(count);
}

}  // namespace preditor
