// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "preditor/common.hpp"

namespace preditor {

using Timestep = int;

enum class ScheduleKind { linear };

/// Discrete diffusion schedule. alpha_bars has horizon + 1 entries with
/// alpha_bars[0] == 1 so that t = 0 denotes clean data.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    int horizon = 0;
    double beta_min = 0.0;
    double beta_max = 0.0;
    Vector betas;       // betas[t - 1] is beta_t
    Vector alphas;      // alphas[t - 1] is 1 - beta_t
    Vector alpha_bars;  // alpha_bars[t], t in [0, horizon]

    double alpha_bar(Timestep t) const {
        if (t < 0 || t > horizon) {
            throw RangeError("timestep " + std::to_string(t) + " outside [0, " +
                             std::to_string(horizon) + "]");
        }
        return alpha_bars[static_cast<std::size_t>(t)];
    }
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int horizon, double beta_min,
                                   double beta_max) {
    if (horizon < 1) throw RangeError("schedule horizon must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw RangeError("schedule requires 0 < beta_min <= beta_max < 1");
    }
    NoiseSchedule s;
    s.kind = kind;
    s.horizon = horizon;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.betas.resize(static_cast<std::size_t>(horizon));
    s.alphas.resize(static_cast<std::size_t>(horizon));
    s.alpha_bars.resize(static_cast<std::size_t>(horizon) + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= horizon; ++t) {
        const double frac = horizon == 1 ? 0.0 : static_cast<double>(t - 1) / (horizon - 1);
        const double beta = beta_min + (beta_max - beta_min) * frac;
        s.betas[t - 1] = beta;
        s.alphas[t - 1] = 1.0 - beta;
        s.alpha_bars[t] = s.alpha_bars[t - 1] * (1.0 - beta);
    }
    return s;
}

inline NoiseSchedule default_schedule() { return make_schedule(ScheduleKind::linear, 1000, 1e-4, 0.02); }

/// round(T * strength), ties half-up.
inline Timestep strength_to_timestep(double strength, int horizon) {
    if (!(strength >= 0.0 && strength <= 1.0)) {
        throw RangeError("strength " + std::to_string(strength) + " outside [0, 1]");
    }
    const double scaled = std::floor(static_cast<double>(horizon) * strength + 0.5);
    const auto t = static_cast<Timestep>(scaled);
    return t < 0 ? 0 : (t > horizon ? horizon : t);
}

/// Strictly decreasing DDIM subsequence, steps.front() == t_start, steps.back() == 0.
struct TimestepGrid {
    std::vector<Timestep> steps;

    std::size_t n_steps() const { return steps.empty() ? 0 : steps.size() - 1; }
};

inline TimestepGrid make_timestep_grid(int horizon, int n_steps, Timestep t_start) {
    if (t_start < 0 || t_start > horizon) throw RangeError("t_start outside [0, T]");
    if (n_steps < 1) throw RangeError("n_steps must be >= 1");
    if (n_steps > t_start) {
        throw OrderingError("n_steps " + std::to_string(n_steps) + " exceeds t_start " +
                            std::to_string(t_start));
    }
    TimestepGrid grid;
    grid.steps.reserve(static_cast<std::size_t>(n_steps) + 1);
    const long long two_n = 2LL * n_steps;
    for (int i = 0; i <= n_steps; ++i) {
        // floor(t_start * (n - i) / n + 1/2) in exact integer arithmetic
        const long long num = 2LL * t_start * (n_steps - i) + n_steps;
        grid.steps.push_back(static_cast<Timestep>(num / two_n));
    }
    return grid;
}

/// Steps to spend on a window [0, t_window] when a full-horizon run uses
/// n_full steps: proportional, at least one, never more than t_window.
inline int steps_for_window(int n_full, Timestep t_window, int horizon) {
    if (t_window <= 0) return 0;
    const double scaled = std::floor(static_cast<double>(n_full) * t_window / horizon + 0.5);
    int n = static_cast<int>(scaled);
    if (n < 1) n = 1;
    if (n > t_window) n = t_window;
    return n;
}

}  // namespace preditor
