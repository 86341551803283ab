// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic (eta = 0) and ancestral (eta > 0) DDIM sampling, including
// sampling that starts from an injected state at an intermediate timestep.

#include <cstdint>

#include "preditor/denoiser.hpp"
#include "preditor/rng.hpp"

namespace preditor {

struct LatentState {
    Vector state;
    Timestep t = 0;
};

/// The seeded N(0, I) draw used as z_T.
inline Vector initial_noise(std::uint64_t seed, std::size_t dim, Timestep horizon) {
    return counter_normal_vector(seed, Stream::initial_noise, static_cast<std::uint64_t>(horizon), dim);
}

/// DDPM posterior standard deviation between t and t_prev, scaled by eta.
inline double ddim_sigma(const NoiseSchedule& s, Timestep t, Timestep t_prev, double eta) {
    if (eta == 0.0) return 0.0;
    const double a_t = s.alpha_bar(t);
    const double a_prev = s.alpha_bar(t_prev);
    return eta * std::sqrt((1.0 - a_prev) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_prev);
}

/// One DDIM update z_t -> z_{t_prev}:
///   sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma^2) eps_hat + sigma xi.
template <NoisePredictor P>
LatentState ddim_step(const P& model, const LatentState& z, Timestep t_prev, const Conditioning& cond,
                      const NoiseSchedule& schedule, double guidance_scale, double eta,
                      std::uint64_t seed = 0) {
    if (t_prev >= z.t) {
        throw OrderingError("ddim_step: t_prev " + std::to_string(t_prev) + " must be < t " + std::to_string(z.t));
    }
    if (t_prev < 0) throw RangeError("ddim_step: t_prev must be >= 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw RangeError("ddim_step: eta outside [0, 1]");
    const Vector eps = guided_epsilon(model, z.state, z.t, cond, guidance_scale);
    const Vector x0 = predict_x0(z.state, z.t, eps, schedule);
    const double a_prev = schedule.alpha_bar(t_prev);
    const double sigma = ddim_sigma(schedule, z.t, t_prev, eta);
    const double dir = std::sqrt(std::max(0.0, 1.0 - a_prev - sigma * sigma));
    const double sa = std::sqrt(a_prev);
    LatentState out{Vector(z.state.size()), t_prev};
    for (std::size_t i = 0; i < out.state.size(); ++i) {
        double v = sa * x0[i] + dir * eps[i];
        if (sigma > 0.0) v += sigma * counter_normal(seed, Stream::ddim_noise, static_cast<std::uint64_t>(t_prev), i);
        out.state[i] = v;
    }
    if (!all_finite(out.state)) throw NumericError("ddim_step produced non-finite state at t=" + std::to_string(t_prev));
    return out;
}

struct NoStepHook {
    void operator()(LatentState&) const {}
};

/// Runs the remaining DDIM steps from z_init.t down to 0. `on_step` sees every
/// new state and may modify it (mask blending).
template <NoisePredictor P, class Hook = NoStepHook>
LatentState sample_from(const P& model, const LatentState& z_init, const Conditioning& cond,
                        const NoiseSchedule& schedule, int n_steps, double guidance_scale, double eta,
                        std::uint64_t seed, Hook&& on_step = {}) {
    require_same_dim(z_init.state.size(), model.state_dim(), "sample_from");
    if (z_init.t < 0 || z_init.t > schedule.horizon) throw RangeError("sample_from: t_start outside [0, T]");
    if (z_init.t == 0) return z_init;
    const TimestepGrid grid = make_timestep_grid(schedule.horizon, n_steps, z_init.t);
    LatentState z = z_init;
    for (std::size_t i = 1; i < grid.steps.size(); ++i) {
        z = ddim_step(model, z, grid.steps[i], cond, schedule, guidance_scale, eta, seed);
        on_step(z);
    }
    return z;
}

template <NoisePredictor P>
LatentState sample(const P& model, const Conditioning& cond, const NoiseSchedule& schedule, int n_steps,
                   std::uint64_t seed, double guidance_scale, double eta = 0.0) {
    if (n_steps < 1) throw RangeError("sample: n_steps must be >= 1");
    const LatentState z_T{initial_noise(seed, model.state_dim(), schedule.horizon), schedule.horizon};
    return sample_from(model, z_T, cond, schedule, n_steps, guidance_scale, eta, seed);
}

}  // namespace preditor
