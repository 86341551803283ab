// SPDX-License-Identifier: Apache-2.0
#pragma once

// The epsilon-prediction interface shared by the trainable network and the
// analytic oracle, plus the algebra built on top of it.

#include <concepts>
#include <span>

#include "preditor/common.hpp"
#include "preditor/embedding.hpp"
#include "preditor/schedule.hpp"

namespace preditor {

/// Anything that predicts the noise component of z_t at timestep t.
template <class P>
concept NoisePredictor = requires(const P& p, std::span<const double> z, Timestep t,
                                  const Conditioning& cond) {
    { p.predict(z, t, cond) } -> std::convertible_to<Vector>;
    { p.state_dim() } -> std::convertible_to<std::size_t>;
};

template <NoisePredictor P>
Vector predict_epsilon(const P& model, std::span<const double> z_t, Timestep t,
                       const Conditioning& cond) {
    require_same_dim(z_t.size(), model.state_dim(), "predict_epsilon");
    return model.predict(z_t, t, cond);
}

/// Clean-state estimate (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
inline Vector predict_x0(std::span<const double> z_t, Timestep t, std::span<const double> eps_hat,
                         const NoiseSchedule& schedule) {
    require_same_dim(z_t.size(), eps_hat.size(), "predict_x0");
    const double abar = schedule.alpha_bar(t);
    if (!(abar > 0.0)) throw NumericError("predict_x0 requires alpha_bar > 0");
    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    Vector x0(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) x0[i] = (z_t[i] - sn * eps_hat[i]) / sa;
    return x0;
}

/// Classifier-free guidance eps_u + w (eps_c - eps_u). w = 1 and w = 0 return
/// the conditional and unconditional predictions exactly.
template <NoisePredictor P>
Vector guided_epsilon(const P& model, std::span<const double> z_t, Timestep t,
                      const Conditioning& cond, double guidance_scale) {
    if (!cond.present() && guidance_scale != 0.0) {
        throw RangeError("guided_epsilon: guidance scale != 0 requires a conditioning embedding");
    }
    if (guidance_scale == 0.0) return predict_epsilon(model, z_t, t, Conditioning::none());
    if (guidance_scale == 1.0) return predict_epsilon(model, z_t, t, cond);
    const Vector eps_c = predict_epsilon(model, z_t, t, cond);
    const Vector eps_u = predict_epsilon(model, z_t, t, Conditioning::none());
    Vector out(eps_c.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_u[i] + guidance_scale * (eps_c[i] - eps_u[i]);
    return out;
}

/// Forward noising sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Vector forward_noise(std::span<const double> x0, std::span<const double> eps, Timestep t,
                            const NoiseSchedule& schedule) {
    require_same_dim(x0.size(), eps.size(), "forward_noise");
    const double abar = schedule.alpha_bar(t);
    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    Vector z(x0.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sa * x0[i] + sn * eps[i];
    return z;
}

}  // namespace preditor
