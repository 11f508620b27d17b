#pragma once

// Independent reference implementations used to check the library. They share no code
// with the solvers under test beyond the GridCase data types.

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "evgrid/grid.hpp"
#include "evgrid/powerflow.hpp"

namespace oracle {

using evgrid::Complex;

/// Dense Y-bus assembled directly from branch admittances.
inline std::vector<std::vector<Complex>> ybus(const evgrid::GridCase& c) {
    const auto n = c.bus_count();
    std::vector<std::vector<Complex>> y(n, std::vector<Complex>(n));
    for (const auto& br : c.branches) {
        const auto i = static_cast<std::size_t>(br.from_bus - 1), j = static_cast<std::size_t>(br.to_bus - 1);
        const Complex a = 1.0 / Complex(br.r, br.x);
        y[i][i] += a;
        y[j][j] += a;
        y[i][j] -= a;
        y[j][i] -= a;
    }
    return y;
}

struct GsResult {
    std::vector<Complex> v;
    int sweeps = 0;
};

/// Gauss-Seidel power flow with a single slack bus (flat start, V = 1 at pv buses).
/// p, q: net injection per bus in p.u.
inline GsResult gauss_seidel(const evgrid::GridCase& c, const std::vector<double>& p, const std::vector<double>& q,
                             double tol = 1e-13, int max_sweeps = 200000) {
    const auto y = ybus(c);
    const auto n = c.bus_count();
    std::vector<Complex> v(n, Complex(1.0, 0.0));
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto kind = c.buses[i].kind;
            if (kind == evgrid::BusKind::slack) continue;
            Complex sum = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                if (k != i) sum += y[i][k] * v[k];
            double qi = q[i];
            if (kind == evgrid::BusKind::pv) qi = -std::imag(std::conj(v[i]) * (sum + y[i][i] * v[i]));
            Complex next = (Complex(p[i], -qi) / std::conj(v[i]) - sum) / y[i][i];
            if (kind == evgrid::BusKind::pv) next = std::polar(1.0, std::arg(next));
            change = std::max(change, std::abs(next - v[i]));
            v[i] = next;
        }
        if (change < tol) return {v, sweep};
    }
    throw std::runtime_error("Gauss-Seidel did not converge");
}

/// Random connected case with up to max_buses buses: a random spanning tree plus a few
/// extra branches, bus 1 slack, some pv buses, light load.
inline evgrid::GridCase random_case(std::mt19937_64& rng, std::size_t max_buses = 6) {
    std::uniform_int_distribution<std::size_t> nbus(2, max_buses);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto n = nbus(rng);
    evgrid::GridCase c;
    for (std::size_t i = 0; i < n; ++i) {
        evgrid::Bus b;
        b.id = static_cast<int>(i + 1);
        b.name = "b" + std::to_string(i + 1);
        b.nominal_kv = 138;
        b.kind = i == 0 ? evgrid::BusKind::slack : (u(rng) < 0.3 ? evgrid::BusKind::pv : evgrid::BusKind::pq);
        if (b.kind == evgrid::BusKind::pq) {
            b.base_load_p = 10.0 + 50.0 * u(rng);
            b.base_load_q = -5.0 + 30.0 * u(rng);
        }
        c.buses.push_back(b);
    }
    auto add_branch = [&](int from, int to) {
        evgrid::Branch br;
        br.from_bus = from;
        br.to_bus = to;
        br.r = 0.002 + 0.03 * u(rng);
        br.x = 0.02 + 0.15 * u(rng);
        br.rating = 500;
        br.from_kv = br.to_kv = 138;
        c.branches.push_back(br);
    };
    for (std::size_t i = 1; i < n; ++i) add_branch(static_cast<int>(std::uniform_int_distribution<std::size_t>(0, i - 1)(rng) + 1), static_cast<int>(i + 1));
    const auto extra = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int e = 0; e < extra && n > 2; ++e) {
        const int a = static_cast<int>(std::uniform_int_distribution<std::size_t>(1, n)(rng));
        const int b = static_cast<int>(std::uniform_int_distribution<std::size_t>(1, n)(rng));
        if (a != b) add_branch(std::min(a, b), std::max(a, b));
    }
    for (const auto& b : c.buses) {
        if (b.kind == evgrid::BusKind::pq) continue;
        evgrid::Generator g;
        g.bus = b.id;
        g.capacity = 400;
        g.p_set = b.kind == evgrid::BusKind::pv ? 20.0 + 40.0 * u(rng) : 0.0;
        g.inertia_h = 4;
        g.droop_r = 0.05;
        g.governor_tc = 0.5;
        g.xd_transient = 0.3;
        c.generators.push_back(g);
    }
    return c;
}

}  // namespace oracle
