#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evgrid/error.hpp"
#include "evgrid/grid.hpp"

namespace evgrid {

/// Active power per bus id in MW (EV fleet slices, attack targets).
using BusPower = std::map<int, double>;

/// Scheduled net injections per bus (index = bus id - 1). Generation positive, load negative.
/// At slack and pv buses the active entry is the scheduled dispatch minus load and the
/// reactive entry is minus the load; the solver frees whatever the bus kind leaves free.
/// gen_p_mw keeps the scheduled generation so loads can be recovered as gen_p_mw - p_mw.
struct InjectionSet {
    std::vector<double> p_mw;
    std::vector<double> q_mvar;
    std::vector<double> gen_p_mw;

    double load_p(std::size_t i) const { return gen_p_mw[i] - p_mw[i]; }
    double load_q(std::size_t i) const { return -q_mvar[i]; }
};

/// All-zero injections (no-load network).
inline InjectionSet zero_injections(const GridCase& c) {
    const std::vector<double> zeros(c.bus_count(), 0.0);
    return {zeros, zeros, zeros};
}

/// Generator dispatch minus base loads.
inline InjectionSet base_injections(const GridCase& c) {
    auto inj = zero_injections(c);
    for (const auto& b : c.buses) {
        inj.p_mw[c.index_of(b.id)] -= b.base_load_p;
        inj.q_mvar[c.index_of(b.id)] -= b.base_load_q;
    }
    for (const auto& g : c.generators) {
        inj.p_mw[c.index_of(g.bus)] += g.p_set;
        inj.gen_p_mw[c.index_of(g.bus)] += g.p_set;
    }
    return inj;
}

/// Adds EV charging as load: P = MW, Q = P tan(acos pf).
inline InjectionSet apply_ev_load(InjectionSet inj, const GridCase& c, const BusPower& slice, double power_factor = 1.0) {
    if (!(power_factor > 0.0 && power_factor <= 1.0)) throw std::invalid_argument("power factor must lie in (0, 1]");
    const double q_ratio = std::tan(std::acos(power_factor));
    for (const auto& [bus, mw] : slice) {
        if (!c.has_bus(bus)) throw ValidationError("EV load at unknown bus " + std::to_string(bus));
        inj.p_mw[c.index_of(bus)] -= mw;
        inj.q_mvar[c.index_of(bus)] -= mw * q_ratio;
    }
    return inj;
}

struct BranchFlow {
    Complex s_from;  // MVA leaving from_bus
    Complex s_to;    // MVA leaving to_bus
};

struct PowerFlowSolution {
    std::vector<double> vm;        // p.u.
    std::vector<double> va;        // rad
    std::vector<BranchFlow> flows;
    std::vector<Complex> injection;  // solved net injection per bus, MVA
    std::vector<double> gen_p_mw;    // per generator, order of GridCase::generators
    std::vector<double> gen_q_mvar;
    double slack_share_mw = 0.0;  // governor-distributed imbalance picked up on top of p_set
    double max_mismatch = 0.0;    // p.u.
    int iterations = 0;           // mismatch evaluations, including the converged one
    InjectionSet scheduled;

    Complex voltage(std::size_t i) const { return std::polar(vm[i], va[i]); }
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 50;
};

namespace detail {

/// Share of the distributed imbalance each bus picks up (sums to 1). Empty in single-slack mode.
inline std::vector<double> participation(const GridCase& c) {
    if (c.slack_distribution != SlackDistribution::governor) return {};
    std::vector<double> a(c.bus_count(), 0.0);
    double total = 0.0;
    for (const auto& g : c.generators) {
        a[c.index_of(g.bus)] += g.droop_gain(c.base_mva);
        total += g.droop_gain(c.base_mva);
    }
    if (!(total > 0.0)) return {};
    for (auto& v : a) v /= total;
    return a;
}

}  // namespace detail

inline std::vector<BranchFlow> branch_flows(const GridCase& c, const std::vector<double>& vm, const std::vector<double>& va) {
    std::vector<BranchFlow> out;
    out.reserve(c.branches.size());
    for (const auto& br : c.branches) {
        const auto i = c.index_of(br.from_bus), j = c.index_of(br.to_bus);
        const Complex vi = std::polar(vm[i], va[i]), vj = std::polar(vm[j], va[j]);
        const Complex current = (vi - vj) * br.admittance();
        out.push_back({vi * std::conj(current) * c.base_mva, vj * std::conj(-current) * c.base_mva});
    }
    return out;
}

/// Full Newton-Raphson on the polar mismatch equations from a flat start.
inline PowerFlowSolution solve_power_flow(const GridCase& c, const InjectionSet& inj, const PowerFlowOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("power flow tolerance must be positive");
    const auto n = c.bus_count();
    if (inj.p_mw.size() != n || inj.q_mvar.size() != n || inj.gen_p_mw.size() != n) throw std::invalid_argument("injection set size does not match bus count");

    const Eigen::MatrixXcd Y = build_ybus(c).dense();
    const auto alpha = detail::participation(c);
    const bool distributed = !alpha.empty();
    const std::size_t slack = c.index_of(c.slack_bus());

    // Unknown layout: angles of every bus but the slack, magnitudes of pq buses, then the
    // distributed imbalance when enabled. Equations: P at non-slack buses (all buses when
    // distributed), Q at pq buses.
    std::vector<std::size_t> ang, mag, prow;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != slack) ang.push_back(i);
        if (c.buses[i].kind == BusKind::pq) mag.push_back(i);
        if (i != slack || distributed) prow.push_back(i);
    }
    const auto nx = ang.size() + mag.size() + (distributed ? 1 : 0);
    const auto nr = prow.size() + mag.size();

    std::vector<double> vm(n, 1.0), va(n, 0.0);
    std::vector<double> psched(n), qsched(n);
    for (std::size_t i = 0; i < n; ++i) {
        psched[i] = inj.p_mw[i] / c.base_mva;
        qsched[i] = inj.q_mvar[i] / c.base_mva;
    }
    double lambda = 0.0;

    Eigen::VectorXd p(n), q(n);
    auto calc_power = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double g = Y(i, k).real(), b = Y(i, k).imag(), t = va[i] - va[k];
                pi += vm[k] * (g * std::cos(t) + b * std::sin(t));
                qi += vm[k] * (g * std::sin(t) - b * std::cos(t));
            }
            p[i] = vm[i] * pi;
            q[i] = vm[i] * qi;
        }
    };

    Eigen::VectorXd resid(static_cast<Eigen::Index>(nr));
    auto evaluate = [&] {
        calc_power();
        double worst = 0.0;
        Eigen::Index r = 0;
        for (auto i : prow) {
            resid[r] = p[i] - psched[i] - (distributed ? alpha[i] * lambda : 0.0);
            worst = std::max(worst, std::abs(resid[r++]));
        }
        for (auto i : mag) {
            resid[r] = q[i] - qsched[i];
            worst = std::max(worst, std::abs(resid[r++]));
        }
        return worst;
    };

    std::vector<Eigen::Index> ang_col(n, -1), mag_col(n, -1);
    for (std::size_t k = 0; k < ang.size(); ++k) ang_col[ang[k]] = static_cast<Eigen::Index>(k);
    for (std::size_t k = 0; k < mag.size(); ++k) mag_col[mag[k]] = static_cast<Eigen::Index>(ang.size() + k);
    const auto lambda_col = static_cast<Eigen::Index>(ang.size() + mag.size());

    PowerFlowSolution sol;
    double mismatch = 0.0;
    for (int it = 1;; ++it) {
        mismatch = evaluate();
        if (mismatch <= opt.tol) {
            sol.iterations = it;
            break;
        }
        if (it >= opt.max_iter) throw ConvergenceError(it, mismatch);

        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nx));
        auto fill_rows = [&](std::size_t i, Eigen::Index row, bool active) {
            for (std::size_t k = 0; k < n; ++k) {
                const double g = Y(i, k).real(), b = Y(i, k).imag(), t = va[i] - va[k];
                const double gc = g * std::cos(t), gs = g * std::sin(t), bc = b * std::cos(t), bs = b * std::sin(t);
                double d_ang, d_mag;
                if (k == i) {
                    d_ang = active ? -q[i] - b * vm[i] * vm[i] : p[i] - g * vm[i] * vm[i];
                    d_mag = active ? p[i] / vm[i] + g * vm[i] : q[i] / vm[i] - b * vm[i];
                } else {
                    d_ang = active ? vm[i] * vm[k] * (gs - bc) : -vm[i] * vm[k] * (gc + bs);
                    d_mag = active ? vm[i] * (gc + bs) : vm[i] * (gs - bc);
                }
                if (ang_col[k] >= 0) J(row, ang_col[k]) = d_ang;
                if (mag_col[k] >= 0) J(row, mag_col[k]) = d_mag;
            }
            if (active && distributed) J(row, lambda_col) = -alpha[i];
        };
        Eigen::Index row = 0;
        for (auto i : prow) fill_rows(i, row++, true);
        for (auto i : mag) fill_rows(i, row++, false);

        const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) {
            const double pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
            throw SingularJacobianError(it, pivot);
        }
        const Eigen::VectorXd dx = lu.solve(-resid);
        for (std::size_t k = 0; k < ang.size(); ++k) va[ang[k]] += dx[static_cast<Eigen::Index>(k)];
        for (std::size_t k = 0; k < mag.size(); ++k) vm[mag[k]] += dx[static_cast<Eigen::Index>(ang.size() + k)];
        if (distributed) lambda += dx[lambda_col];
    }

    sol.vm = vm;
    sol.va = va;
    sol.max_mismatch = mismatch;
    sol.slack_share_mw = lambda * c.base_mva;
    sol.scheduled = inj;
    sol.flows = branch_flows(c, vm, va);
    sol.injection.resize(n);
    for (std::size_t i = 0; i < n; ++i) sol.injection[i] = Complex(p[i], q[i]) * c.base_mva;

    // Per-generator output: the bus generation is split by scheduled dispatch (capacity when
    // nothing is scheduled) and the bus reactive output by capacity.
    const auto ng = c.generators.size();
    sol.gen_p_mw.assign(ng, 0.0);
    sol.gen_q_mvar.assign(ng, 0.0);
    std::vector<double> bus_cap(n, 0.0), bus_p_set(n, 0.0);
    for (const auto& g : c.generators) {
        bus_cap[c.index_of(g.bus)] += g.capacity;
        bus_p_set[c.index_of(g.bus)] += g.p_set;
    }
    for (std::size_t k = 0; k < ng; ++k) {
        const auto& g = c.generators[k];
        const auto i = c.index_of(g.bus);
        const double cap_share = g.capacity / bus_cap[i];
        const double p_share = bus_p_set[i] > 0.0 ? g.p_set / bus_p_set[i] : cap_share;
        sol.gen_p_mw[k] = (sol.injection[i].real() + inj.load_p(i)) * p_share;
        sol.gen_q_mvar[k] = (sol.injection[i].imag() + inj.load_q(i)) * cap_share;
    }
    return sol;
}

inline PowerFlowSolution solve_power_flow(const GridCase& c, const InjectionSet& inj, double tol, int max_iter) {
    return solve_power_flow(c, inj, PowerFlowOptions{tol, max_iter});
}

/// Loading per branch in percent of rating, using the larger end apparent power.
inline std::vector<double> line_loadings(const GridCase& c, const PowerFlowSolution& sol) {
    std::vector<double> out;
    out.reserve(c.branches.size());
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& f = sol.flows[k];
        out.push_back(100.0 * std::max(std::abs(f.s_from), std::abs(f.s_to)) / c.branches[k].rating);
    }
    return out;
}

}  // namespace evgrid
