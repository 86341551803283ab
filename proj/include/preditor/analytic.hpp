// SPDX-License-Identifier: Apache-2.0
#pragma once

// Bayes-optimal noise prediction for isotropic Gaussian-mixture data.

#include <algorithm>
#include <cmath>
#include <limits>

#include "preditor/denoiser.hpp"

namespace preditor {

struct GaussianMixture {
    Vector weights;
    std::vector<Vector> means;
    Vector variances;  // isotropic, one per component

    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
    std::size_t size() const { return weights.size(); }

    void validate() const {
        if (weights.empty()) throw RangeError("mixture needs at least one component");
        if (means.size() != weights.size() || variances.size() != weights.size()) {
            throw DimensionError("mixture weights, means and variances differ in length");
        }
        double total = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (!(weights[k] > 0.0)) throw RangeError("mixture weights must be positive");
            if (!(variances[k] > 0.0)) throw RangeError("mixture variances must be positive");
            require_same_dim(means[k].size(), dim(), "mixture mean");
            total += weights[k];
        }
        if (std::abs(total - 1.0) > 1e-9) throw RangeError("mixture weights must sum to 1");
    }

    static GaussianMixture single(Vector mean, double variance) {
        GaussianMixture m{{1.0}, {std::move(mean)}, {variance}};
        m.validate();
        return m;
    }
};

namespace detail {

// Posterior mean E[x0 | z_t] given per-component log prior weights.
inline Vector posterior_mean(const GaussianMixture& mix, std::span<const double> log_weights,
                             std::span<const double> z_t, double abar) {
    const std::size_t d = mix.dim();
    const double sa = std::sqrt(abar);
    const std::size_t k_count = mix.size();
    Vector log_resp(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        // z_t | k ~ N(sqrt(abar) mu_k, (abar s_k^2 + 1 - abar) I)
        const double var = abar * mix.variances[k] + (1.0 - abar);
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double r = z_t[i] - sa * mix.means[k][i];
            sq += r * r;
        }
        log_resp[k] = log_weights[k] - 0.5 * static_cast<double>(d) * std::log(var) - 0.5 * sq / var;
    }
    const double top = *std::max_element(log_resp.begin(), log_resp.end());
    double norm = 0.0;
    for (double& lr : log_resp) {
        lr = std::exp(lr - top);
        norm += lr;
    }
    if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("mixture responsibilities vanished");

    Vector out(d, 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
        const double resp = log_resp[k] / norm;
        if (resp == 0.0) continue;
        const double var = abar * mix.variances[k] + (1.0 - abar);
        const double gain = sa * mix.variances[k] / var;
        for (std::size_t i = 0; i < d; ++i) {
            out[i] += resp * (mix.means[k][i] + gain * (z_t[i] - sa * mix.means[k][i]));
        }
    }
    return out;
}

inline Vector log_of(std::span<const double> w) {
    Vector out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [](double x) { return std::log(x); });
    return out;
}

inline Vector epsilon_from_posterior(std::span<const double> z_t, std::span<const double> x0_mean,
                                     double abar) {
    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    Vector eps(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) eps[i] = (z_t[i] - sa * x0_mean[i]) / sn;
    return eps;
}

}  // namespace detail

inline Vector analytic_posterior_mean(const GaussianMixture& mix, std::span<const double> z_t,
                                      Timestep t, const NoiseSchedule& schedule) {
    require_same_dim(z_t.size(), mix.dim(), "analytic_posterior_mean");
    const Vector lw = detail::log_of(mix.weights);
    return detail::posterior_mean(mix, lw, z_t, schedule.alpha_bar(t));
}

inline Vector analytic_gaussian_epsilon(const GaussianMixture& mix, std::span<const double> z_t,
                                        Timestep t, const NoiseSchedule& schedule) {
    if (t < 1) throw RangeError("analytic_gaussian_epsilon requires t >= 1");
    const double abar = schedule.alpha_bar(t);
    const Vector x0 = analytic_posterior_mean(mix, z_t, t, schedule);
    return detail::epsilon_from_posterior(z_t, x0, abar);
}

/// Analytic noise predictor usable wherever a trained model is. When
/// conditioned, component k is reweighted by exp(sharpness * cos(key_k, cond)),
/// giving distinct conditional and unconditional laws for guidance checks.
class AnalyticDenoiser {
public:
    AnalyticDenoiser(GaussianMixture mixture, NoiseSchedule schedule,
                     std::vector<ConceptEmbedding> keys = {}, double sharpness = 0.0)
        : mixture_(std::move(mixture)), schedule_(std::move(schedule)), keys_(std::move(keys)),
          sharpness_(sharpness) {
        mixture_.validate();
        if (!keys_.empty() && keys_.size() != mixture_.size()) {
            throw DimensionError("one key embedding per mixture component required");
        }
        log_weights_ = detail::log_of(mixture_.weights);
    }

    std::size_t state_dim() const { return mixture_.dim(); }
    const GaussianMixture& mixture() const { return mixture_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    Vector log_weights(const Conditioning& cond) const {
        Vector lw = log_weights_;
        if (cond.present() && !keys_.empty()) {
            for (std::size_t k = 0; k < lw.size(); ++k) lw[k] += sharpness_ * cosine(keys_[k], *cond.embedding);
        }
        return lw;
    }

    Vector predict(std::span<const double> z_t, Timestep t, const Conditioning& cond) const {
        require_same_dim(z_t.size(), state_dim(), "AnalyticDenoiser::predict");
        if (t < 1) throw RangeError("AnalyticDenoiser::predict requires t >= 1");
        const double abar = schedule_.alpha_bar(t);
        const Vector lw = log_weights(cond);
        const Vector x0 = detail::posterior_mean(mixture_, lw, z_t, abar);
        return detail::epsilon_from_posterior(z_t, x0, abar);
    }

private:
    GaussianMixture mixture_;
    NoiseSchedule schedule_;
    std::vector<ConceptEmbedding> keys_;
    double sharpness_;
    Vector log_weights_;
};

}  // namespace preditor
