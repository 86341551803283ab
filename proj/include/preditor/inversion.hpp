// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two ways to reach a partially noised latent of a clean input: deterministic
// reverse DDIM and seeded SDEdit forward noising.

#include "preditor/sampler.hpp"

namespace preditor {

/// z_{t_next} = sqrt(abar_{t_next}) f(z_t) + sqrt(1 - abar_{t_next}) eps(z_t),
/// f the clean-state estimate. Always the plain conditional prediction
/// (guidance 1). At t = 0 the predictor is queried at t = 1, the nearest
/// timestep with a defined noise level; f(z_0) = z_0 regardless.
template <NoisePredictor P>
LatentState reverse_ddim_step(const P& model, const LatentState& z, Timestep t_next, const Conditioning& cond,
                              const NoiseSchedule& schedule) {
    if (t_next <= z.t) {
        throw OrderingError("reverse_ddim_step: t_next " + std::to_string(t_next) + " must be > t " +
                            std::to_string(z.t));
    }
    if (t_next > schedule.horizon) throw RangeError("reverse_ddim_step: t_next beyond horizon");
    const Vector eps = predict_epsilon(model, z.state, std::max(z.t, 1), cond);
    const Vector x0 = predict_x0(z.state, z.t, eps, schedule);
    const double a_next = schedule.alpha_bar(t_next);
    const double sa = std::sqrt(a_next);
    const double sn = std::sqrt(1.0 - a_next);
    LatentState out{Vector(z.state.size()), t_next};
    for (std::size_t i = 0; i < out.state.size(); ++i) out.state[i] = sa * x0[i] + sn * eps[i];
    if (!all_finite(out.state)) throw NumericError("reverse_ddim_step produced non-finite state");
    return out;
}

/// Increasing timestep sequence 0 -> t_s matching the sampling grid from t_s.
inline std::vector<Timestep> inversion_grid(int horizon, int n_steps, Timestep t_s) {
    auto steps = make_timestep_grid(horizon, n_steps, t_s).steps;
    std::reverse(steps.begin(), steps.end());
    return steps;
}

/// Every state of the reverse-DDIM trajectory from t = 0 up to t_s (front is x0).
template <NoisePredictor P>
std::vector<LatentState> invert_trajectory(const P& model, const LatentState& x0, const Conditioning& cond,
                                           double s, const NoiseSchedule& schedule, int n_steps) {
    if (x0.t != 0) throw RangeError("invert expects a clean state at t = 0");
    require_same_dim(x0.state.size(), model.state_dim(), "invert");
    const Timestep t_s = strength_to_timestep(s, schedule.horizon);
    std::vector<LatentState> traj{x0};
    if (t_s == 0) return traj;
    for (const Timestep t_next : inversion_grid(schedule.horizon, n_steps, t_s)) {
        if (t_next == 0) continue;
        traj.push_back(reverse_ddim_step(model, traj.back(), t_next, cond, schedule));
    }
    return traj;
}

template <NoisePredictor P>
LatentState invert(const P& model, const LatentState& x0, const Conditioning& cond, double s,
                   const NoiseSchedule& schedule, int n_steps) {
    return invert_trajectory(model, x0, cond, s, schedule, n_steps).back();
}

/// Seeded forward noising at an arbitrary timestep; noise keyed by (seed, t).
inline LatentState noise_to(const LatentState& x0, Timestep t, const NoiseSchedule& schedule, std::uint64_t seed) {
    if (x0.t != 0) throw RangeError("forward noising expects a clean state at t = 0");
    const Vector xi = counter_normal_vector(seed, Stream::sdedit_noise, static_cast<std::uint64_t>(t), x0.state.size());
    return LatentState{forward_noise(x0.state, xi, t, schedule), t};
}

inline LatentState sdedit_noise(const LatentState& x0, double s, const NoiseSchedule& schedule, std::uint64_t seed) {
    const Timestep t_s = strength_to_timestep(s, schedule.horizon);
    if (t_s == 0) return x0;
    return noise_to(x0, t_s, schedule, seed);
}

}  // namespace preditor
