// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small dense epsilon-prediction network:
//   input  = [z_t, sinusoidal(t), cond, cond_present]
//   hidden = two SiLU layers of configurable width
//   output = MLP(input) + g * gaussian_skip(z_t, t)
// The optional skip term is the per-coordinate Gaussian-optimal linear
// predictor computed from training-data mean/variance, scaled by a learned
// gain g initialised to 1. The same statistics standardise z_t before it
// enters the network, so its input has unit scale at every t.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "preditor/denoiser.hpp"
#include "preditor/rng.hpp"

namespace preditor {

struct DenoiserShape {
    std::size_t state_dim = 0;
    std::size_t cond_dim = 0;
    std::size_t time_features = 16;
    std::size_t hidden = 128;
    bool gaussian_skip = false;

    std::size_t input_dim() const { return state_dim + time_features + (cond_dim > 0 ? cond_dim + 1 : 0); }

    std::size_t param_count() const {
        const std::size_t in = input_dim();
        return hidden * in + hidden + hidden * hidden + hidden + state_dim * hidden + state_dim +
               (gaussian_skip ? state_dim : 0);
    }

    bool operator==(const DenoiserShape&) const = default;
};

/// Offsets of each tensor inside the flat parameter vector (column-major blocks).
struct ParamLayout {
    std::size_t w1, b1, w2, b2, w3, b3, gain, total;

    explicit ParamLayout(const DenoiserShape& s) {
        const std::size_t in = s.input_dim();
        w1 = 0;
        b1 = w1 + s.hidden * in;
        w2 = b1 + s.hidden;
        b2 = w2 + s.hidden * s.hidden;
        w3 = b2 + s.hidden;
        b3 = w3 + s.state_dim * s.hidden;
        gain = b3 + s.state_dim;
        total = gain + (s.gaussian_skip ? s.state_dim : 0);
    }
};

inline void time_encoding(Timestep t, std::span<double> out) {
    const std::size_t half = out.size() / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out[2 * k] = std::sin(t * freq);
        out[2 * k + 1] = std::cos(t * freq);
    }
    if (out.size() % 2 == 1) out.back() = static_cast<double>(t) / 1000.0;
}

/// Parameter and gradient storage. Eigen's vectorised kernels pick their code
/// path from the buffer address, so an unaligned std::vector makes the rounding
/// of trained weights depend on heap layout.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Column-oriented mini-batch: one example per column.
struct DenoiserBatch {
    Eigen::MatrixXd input;   // input_dim x B
    Eigen::MatrixXd skip;    // state_dim x B (empty without skip)
    Eigen::MatrixXd target;  // state_dim x B
};

}  // namespace detail

class DenoiserModel {
    using MatMap = Eigen::Map<Eigen::MatrixXd>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;
    using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
    using CVecMap = Eigen::Map<const Eigen::VectorXd>;

    template <class Ptr>
    auto views(Ptr base) const {
        using M = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, CMatMap, MatMap>;
        using V = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, CVecMap, VecMap>;
        const ParamLayout L(shape_);
        const auto in = static_cast<Eigen::Index>(shape_.input_dim());
        const auto h = static_cast<Eigen::Index>(shape_.hidden);
        const auto d = static_cast<Eigen::Index>(shape_.state_dim);
        return std::tuple<M, V, M, V, M, V>{M(base + L.w1, h, in), V(base + L.b1, h),
                                            M(base + L.w2, h, h),  V(base + L.b2, h),
                                            M(base + L.w3, d, h),  V(base + L.b3, d)};
    }

    CVecMap gain_view(const double* base) const {
        return CVecMap(base + ParamLayout(shape_).gain, static_cast<Eigen::Index>(shape_.state_dim));
    }

public:
    DenoiserModel() = default;

    DenoiserModel(DenoiserShape shape, NoiseSchedule schedule, double cond_dropout)
        : shape_(shape), schedule_(std::move(schedule)), cond_dropout_(cond_dropout),
          params_(shape.param_count(), 0.0) {
        if (shape_.state_dim == 0) throw DimensionError("denoiser state_dim must be positive");
        if (shape_.gaussian_skip) {
            skip_mean_.assign(shape_.state_dim, 0.0);
            skip_var_.assign(shape_.state_dim, 1.0);
        }
    }

    const DenoiserShape& shape() const { return shape_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    double cond_dropout() const { return cond_dropout_; }
    std::size_t state_dim() const { return shape_.state_dim; }

    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    const Vector& skip_mean() const { return skip_mean_; }
    const Vector& skip_var() const { return skip_var_; }

    void set_skip_statistics(Vector mean, Vector var) {
        if (!shape_.gaussian_skip) throw Error("model has no gaussian skip path");
        require_same_dim(mean.size(), shape_.state_dim, "skip mean");
        require_same_dim(var.size(), shape_.state_dim, "skip variance");
        skip_mean_ = std::move(mean);
        skip_var_ = std::move(var);
    }

    /// LeCun-normal weights, zero biases, unit skip gains.
    void initialize(std::uint64_t seed) {
        const ParamLayout L(shape_);
        CounterRng rng(seed, Stream::init_weights);
        auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i) params_[offset + i] = scale * rng.normal();
        };
        std::fill(params_.begin(), params_.end(), 0.0);
        fill(L.w1, L.b1 - L.w1, shape_.input_dim());
        fill(L.w2, L.b2 - L.w2, shape_.hidden);
        fill(L.w3, L.b3 - L.w3, shape_.hidden);
        for (std::size_t i = L.gain; i < L.total; ++i) params_[i] = 1.0;
    }

    void write_input(std::span<const double> z_t, Timestep t, const Conditioning& cond,
                     std::span<double> out) const {
        if (shape_.gaussian_skip) {
            const double abar = schedule_.alpha_bar(t);
            const double sa = std::sqrt(abar);
            for (std::size_t i = 0; i < shape_.state_dim; ++i) {
                out[i] = (z_t[i] - sa * skip_mean_[i]) / std::sqrt(abar * skip_var_[i] + 1.0 - abar);
            }
        } else {
            std::copy(z_t.begin(), z_t.end(), out.begin());
        }
        time_encoding(t, out.subspan(shape_.state_dim, shape_.time_features));
        if (shape_.cond_dim == 0) return;
        auto c = out.subspan(shape_.state_dim + shape_.time_features, shape_.cond_dim + 1);
        if (cond.present()) {
            require_same_dim(cond.embedding->dim(), shape_.cond_dim, "conditioning");
            std::copy(cond.embedding->values.begin(), cond.embedding->values.end(), c.begin());
            c.back() = 1.0;
        } else {
            std::fill(c.begin(), c.end(), 0.0);
        }
    }

    void write_skip(std::span<const double> z_t, Timestep t, std::span<double> out) const {
        const double abar = schedule_.alpha_bar(t);
        const double sa = std::sqrt(abar);
        const double sn = std::sqrt(1.0 - abar);
        for (std::size_t i = 0; i < shape_.state_dim; ++i) {
            out[i] = sn * (z_t[i] - sa * skip_mean_[i]) / (abar * skip_var_[i] + 1.0 - abar);
        }
    }

    Vector predict(std::span<const double> z_t, Timestep t, const Conditioning& cond) const {
        require_same_dim(z_t.size(), shape_.state_dim, "DenoiserModel::predict");
        if (t < 1 || t > schedule_.horizon) throw RangeError("predict requires t in [1, T]");
        Eigen::VectorXd x(static_cast<Eigen::Index>(shape_.input_dim()));
        write_input(z_t, t, cond, {x.data(), static_cast<std::size_t>(x.size())});
        Eigen::VectorXd skip;
        if (shape_.gaussian_skip) {
            skip.resize(static_cast<Eigen::Index>(shape_.state_dim));
            write_skip(z_t, t, {skip.data(), shape_.state_dim});
        }
        const auto [w1, b1, w2, b2, w3, b3] = views(params_.data());
        Eigen::VectorXd h1 = (w1 * x + b1).unaryExpr([](double a) { return a * detail::sigmoid(a); });
        Eigen::VectorXd h2 = (w2 * h1 + b2).unaryExpr([](double a) { return a * detail::sigmoid(a); });
        Eigen::VectorXd y = w3 * h2 + b3;
        if (shape_.gaussian_skip) y += gain_view(params_.data()).cwiseProduct(skip);
        return Vector(y.data(), y.data() + y.size());
    }

    /// Mean-squared error over the batch and its gradient w.r.t. `params`
    /// (which need not be this model's own parameters; used by gradient checks).
    double loss_and_gradient(std::span<const double> params, const detail::DenoiserBatch& batch,
                             std::span<double> grad) const {
        require_same_dim(params.size(), shape_.param_count(), "parameters");
        require_same_dim(grad.size(), shape_.param_count(), "gradient");
        const auto B = batch.input.cols();
        const auto [w1, b1, w2, b2, w3, b3] = views(params.data());
        const Eigen::MatrixXd a1 = (w1 * batch.input).colwise() + b1;
        const Eigen::MatrixXd s1 = a1.unaryExpr([](double a) { return detail::sigmoid(a); });
        const Eigen::MatrixXd h1 = a1.cwiseProduct(s1);
        const Eigen::MatrixXd a2 = (w2 * h1).colwise() + b2;
        const Eigen::MatrixXd s2 = a2.unaryExpr([](double a) { return detail::sigmoid(a); });
        const Eigen::MatrixXd h2 = a2.cwiseProduct(s2);
        Eigen::MatrixXd y = (w3 * h2).colwise() + b3;
        if (shape_.gaussian_skip) y += gain_view(params.data()).asDiagonal() * batch.skip;

        const Eigen::MatrixXd diff = y - batch.target;
        const double denom = static_cast<double>(B) * static_cast<double>(shape_.state_dim);
        const double loss = diff.squaredNorm() / denom;

        const ParamLayout L(shape_);
        auto [gw1, gb1, gw2, gb2, gw3, gb3] = views(grad.data());
        const Eigen::MatrixXd dy = diff * (2.0 / denom);
        gw3.noalias() = dy * h2.transpose();
        gb3 = dy.rowwise().sum();
        if (shape_.gaussian_skip) {
            Eigen::Map<Eigen::VectorXd> gg(grad.data() + L.gain, static_cast<Eigen::Index>(shape_.state_dim));
            gg = dy.cwiseProduct(batch.skip).rowwise().sum();
        }
        const auto silu_grad = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
            return (s.array() * (1.0 + a.array() * (1.0 - s.array()))).matrix();
        };
        const Eigen::MatrixXd da2 = (w3.transpose() * dy).cwiseProduct(silu_grad(a2, s2));
        gw2.noalias() = da2 * h1.transpose();
        gb2 = da2.rowwise().sum();
        const Eigen::MatrixXd da1 = (w2.transpose() * da2).cwiseProduct(silu_grad(a1, s1));
        gw1.noalias() = da1 * batch.input.transpose();
        gb1 = da1.rowwise().sum();
        return loss;
    }

    void save(const std::string& path) const;
    static DenoiserModel load(const std::string& path);

private:
    DenoiserShape shape_;
    NoiseSchedule schedule_;
    double cond_dropout_ = 0.0;
    ParamVector params_;
    Vector skip_mean_;
    Vector skip_var_;
};

// ---------------------------------------------------------------------------
// Serialization. Little-endian layout:
//   char[8]  magic "PRDTDNS1"
//   u32      state_dim, cond_dim, time_features, hidden, flags (bit0 = gaussian skip), horizon
//   f64      beta_min, beta_max, cond_dropout
//   u64      param_count
//   f64[param_count] parameters
//   f64[state_dim] skip mean, f64[state_dim] skip variance   (only when flags bit0)

namespace detail {

inline constexpr std::array<char, 8> kDenoiserMagic = {'P', 'R', 'D', 'T', 'D', 'N', 'S', '1'};

template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw ParseError("", "truncated model file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline void DenoiserModel::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os.write(detail::kDenoiserMagic.data(), detail::kDenoiserMagic.size());
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape_.state_dim));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape_.cond_dim));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape_.time_features));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape_.hidden));
    detail::put_le<std::uint32_t>(os, shape_.gaussian_skip ? 1u : 0u);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(schedule_.horizon));
    detail::put_le<double>(os, schedule_.beta_min);
    detail::put_le<double>(os, schedule_.beta_max);
    detail::put_le<double>(os, cond_dropout_);
    detail::put_le<std::uint64_t>(os, params_.size());
    for (double p : params_) detail::put_le<double>(os, p);
    if (shape_.gaussian_skip) {
        for (double m : skip_mean_) detail::put_le<double>(os, m);
        for (double v : skip_var_) detail::put_le<double>(os, v);
    }
    if (!os) throw Error("failed writing " + path);
}

inline DenoiserModel DenoiserModel::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open model file " + path);
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != detail::kDenoiserMagic) {
        throw ParseError("", path + " is not a denoiser model file");
    }
    DenoiserShape shape;
    shape.state_dim = detail::get_le<std::uint32_t>(is);
    shape.cond_dim = detail::get_le<std::uint32_t>(is);
    shape.time_features = detail::get_le<std::uint32_t>(is);
    shape.hidden = detail::get_le<std::uint32_t>(is);
    shape.gaussian_skip = (detail::get_le<std::uint32_t>(is) & 1u) != 0;
    const auto horizon = static_cast<int>(detail::get_le<std::uint32_t>(is));
    const double beta_min = detail::get_le<double>(is);
    const double beta_max = detail::get_le<double>(is);
    const double dropout = detail::get_le<double>(is);
    const auto count = detail::get_le<std::uint64_t>(is);
    DenoiserModel model(shape, make_schedule(ScheduleKind::linear, horizon, beta_min, beta_max), dropout);
    if (count != shape.param_count()) throw ParseError("", "parameter count does not match header in " + path);
    for (double& p : model.params_) p = detail::get_le<double>(is);
    if (shape.gaussian_skip) {
        for (double& m : model.skip_mean_) m = detail::get_le<double>(is);
        for (double& v : model.skip_var_) v = detail::get_le<double>(is);
    }
    return model;
}

}  // namespace preditor
