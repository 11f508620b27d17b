#pragma once

#include <cstddef>

namespace evgrid {

/// One classical fourth-order Runge-Kutta step of dy/dt = f(t, y).
/// State must support y + scalar * y (Eigen vectors, plain doubles, ...).
template <typename State, typename Deriv>
State rk4_step(Deriv&& f, double t, const State& y, double h) {
    const State k1 = f(t, y);
    const State k2 = f(t + 0.5 * h, State(y + (0.5 * h) * k1));
    const State k3 = f(t + 0.5 * h, State(y + (0.5 * h) * k2));
    const State k4 = f(t + h, State(y + h * k3));
    return State(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// Integrates over `steps` fixed steps starting at t0, calling observe(k, t, y) after each step.
/// observe returns false to stop early; the number of completed steps is returned.
template <typename State, typename Deriv, typename Observer>
std::size_t rk4_integrate(Deriv&& f, double t0, State& y, double h, std::size_t steps, Observer&& observe) {
    for (std::size_t k = 1; k <= steps; ++k) {
        y = rk4_step(f, t0 + static_cast<double>(k - 1) * h, y, h);
        if (!observe(k, t0 + static_cast<double>(k) * h, y)) return k;
    }
    return steps;
}

}  // namespace evgrid
