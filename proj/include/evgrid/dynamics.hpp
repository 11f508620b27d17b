#pragma once

// Classical transient-stability model: constant EMF behind transient reactance, swing
// equation and a first-order droop governor per machine. The network is solved
// algebraically at every derivative evaluation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evgrid/grid.hpp"
#include "evgrid/powerflow.hpp"
#include "evgrid/rk4.hpp"

namespace evgrid {

/// Sudden change in the load at one bus. Negative dp_mw removes load.
struct LoadStep {
    double time_s = 0.0;
    int bus = 0;
    double dp_mw = 0.0;
    double dq_mvar = 0.0;
};

enum class LoadModel { constant_power, constant_impedance };

struct SimulationConfig {
    double step_s = 0.01;
    LoadModel load_model = LoadModel::constant_power;
    double horizon_s = 25.0;
    std::vector<LoadStep> events;
    double max_speed_deviation = 0.1;  // p.u.; beyond this the run aborts as loss of synchronism
};

struct MachineState {
    double angle = 0.0;      // rad, synchronous frame
    double speed_dev = 0.0;  // p.u.
    double p_mech = 0.0;     // p.u. on machine base
    double emf = 0.0;        // p.u., constant
};

struct TransientResult {
    std::vector<double> time_s;
    std::vector<double> coi_hz;                        // [t]
    std::vector<std::vector<double>> machine_hz;       // [generator][t]
    std::vector<std::vector<double>> bus_hz;           // [bus][t]
    std::vector<std::vector<double>> bus_voltage_pu;   // [bus][t]
    std::vector<std::vector<double>> branch_loading;   // [branch][t], percent of rating
    std::vector<int> generator_bus;           // bus id per generator
    std::vector<int> bus_id;                  // bus id per bus row
    std::vector<std::string> branch_label;    // "from-to" per branch row
    std::vector<MachineState> initial_machines;
    std::vector<MachineState> final_machines;
    double first_event_s = 0.0;
    double horizon_s = 0.0;
    double peak_hz = kNominalHz;
    double steady_hz = kNominalHz;
    double peak_voltage_pu = 0.0;
    double steady_variance = 0.0;  // Hz^2 over the steady window
    std::optional<std::string> abort_reason;
};

/// Thrown when a machine's speed deviation leaves the admissible band. Carries the trace so far.
class LossOfSynchronism : public std::runtime_error {
public:
    LossOfSynchronism(const std::string& what, TransientResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const TransientResult& partial() const noexcept { return partial_; }

private:
    TransientResult partial_;
};

struct TransientSummary {
    double peak_hz = kNominalHz;
    double steady_hz = kNominalHz;
    double peak_voltage_pu = 0.0;
    bool settled = true;
};

inline constexpr double kSettledVarianceHz2 = 1e-4;

/// Peak COI frequency after the first event, mean COI frequency over the final 10% of the
/// horizon, and the highest bus voltage after the first event.
inline TransientSummary extract_summary(const TransientResult& r) {
    return {r.peak_hz, r.steady_hz, r.peak_voltage_pu, r.steady_variance < kSettledVarianceHz2};
}

/// Steady-state frequency after removing `dropped_mw` of load, from the droop characteristic alone.
inline double steady_state_frequency_analytic(const GridCase& c, double dropped_mw) {
    double gain = 0.0;
    for (const auto& g : c.generators) gain += g.droop_gain(c.base_mva);
    if (!(gain > 0.0)) throw std::invalid_argument("total droop gain is zero");
    return kNominalHz + kNominalHz * (dropped_mw / c.base_mva) / gain;
}

namespace detail {

inline void finish_statistics(TransientResult& r) {
    const auto n = r.time_s.size();
    if (n == 0) return;
    r.peak_hz = -std::numeric_limits<double>::infinity();
    r.peak_voltage_pu = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        if (r.time_s[k] + 1e-9 < r.first_event_s) continue;
        r.peak_hz = std::max(r.peak_hz, r.coi_hz[k]);
        for (const auto& v : r.bus_voltage_pu) r.peak_voltage_pu = std::max(r.peak_voltage_pu, v[k]);
    }
    const double window_start = 0.9 * r.time_s.back();
    double sum = 0.0, sq = 0.0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (r.time_s[k] + 1e-9 < window_start) continue;
        sum += r.coi_hz[k];
        ++m;
    }
    r.steady_hz = sum / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) {
        if (r.time_s[k] + 1e-9 < window_start) continue;
        sq += (r.coi_hz[k] - r.steady_hz) * (r.coi_hz[k] - r.steady_hz);
    }
    r.steady_variance = sq / static_cast<double>(m);
}

}  // namespace detail

/// Integrates the machine dynamics from a converged pre-event power flow.
inline TransientResult simulate_transient(const GridCase& c, const PowerFlowSolution& initial, const SimulationConfig& cfg) {
    if (!(cfg.step_s > 0.0)) throw std::invalid_argument("time step must be positive");
    if (initial.vm.size() != c.bus_count()) throw std::invalid_argument("initial solution does not match the case");
    if (!(initial.max_mismatch <= 1e-6)) throw std::invalid_argument("initial power flow is not converged");
    for (std::size_t e = 0; e < cfg.events.size(); ++e) {
        if (!c.has_bus(cfg.events[e].bus)) throw ValidationError("load step at unknown bus " + std::to_string(cfg.events[e].bus));
        if (cfg.events[e].time_s < 0.0 || cfg.events[e].time_s > cfg.horizon_s) throw std::invalid_argument("load step outside the horizon");
        if (e > 0 && cfg.events[e].time_s < cfg.events[e - 1].time_s) throw std::invalid_argument("load steps must be sorted by time");
    }

    const auto n = c.bus_count();
    const auto ng = c.generators.size();
    const double base = c.base_mva;
    const double omega_s = 2.0 * std::numbers::pi * kNominalHz;
    const Complex j{0.0, 1.0};

    // Loads: the pre-event impedance equivalent is built into the factorized matrix. For
    // constant-power loads the deviation from it is injected as a correction current.
    Eigen::VectorXcd y_load(static_cast<Eigen::Index>(n));
    Eigen::VectorXcd s_load(static_cast<Eigen::Index>(n));
    std::vector<double> v0sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        s_load[ii] = Complex(initial.scheduled.load_p(i), initial.scheduled.load_q(i)) / base;
        v0sq[i] = initial.vm[i] * initial.vm[i];
        y_load[ii] = std::conj(s_load[ii]) / v0sq[i];
    }
    const bool constant_power = cfg.load_model == LoadModel::constant_power;

    // Machines: EMF behind transient reactance (system base).
    std::vector<double> x_sys(ng), h_weight(ng), p_ref(ng);
    std::vector<Complex> y_gen(ng);
    std::vector<std::size_t> gen_bus(ng);
    Eigen::VectorXd y0(static_cast<Eigen::Index>(3 * ng));
    TransientResult result;
    result.initial_machines.resize(ng);
    double h_total = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
        const auto& gen = c.generators[g];
        gen_bus[g] = c.index_of(gen.bus);
        x_sys[g] = gen.xd_transient * base / gen.capacity;
        y_gen[g] = 1.0 / (j * x_sys[g]);
        const Complex v = initial.voltage(gen_bus[g]);
        const Complex s = Complex(initial.gen_p_mw[g], initial.gen_q_mvar[g]) / base;
        const Complex e = v + j * x_sys[g] * std::conj(s / v);
        p_ref[g] = initial.gen_p_mw[g] / gen.capacity;
        h_weight[g] = gen.inertia_h * gen.capacity;
        h_total += h_weight[g];
        result.initial_machines[g] = {std::arg(e), 0.0, p_ref[g], std::abs(e)};
        y0[static_cast<Eigen::Index>(3 * g)] = std::arg(e);
        y0[static_cast<Eigen::Index>(3 * g + 1)] = 0.0;
        y0[static_cast<Eigen::Index>(3 * g + 2)] = p_ref[g];
    }

    const Eigen::MatrixXcd y_net = build_ybus(c).dense();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
    auto factorize = [&] {
        Eigen::MatrixXcd y_aug = y_net;
        for (std::size_t i = 0; i < n; ++i) y_aug(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += y_load[static_cast<Eigen::Index>(i)];
        for (std::size_t g = 0; g < ng; ++g) y_aug(static_cast<Eigen::Index>(gen_bus[g]), static_cast<Eigen::Index>(gen_bus[g])) += y_gen[g];
        lu.compute(y_aug);
    };
    factorize();

    Eigen::VectorXcd v_bus(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v_bus[static_cast<Eigen::Index>(i)] = initial.voltage(i);
    auto solve_network = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXcd source = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t g = 0; g < ng; ++g)
            source[static_cast<Eigen::Index>(gen_bus[g])] +=
                std::polar(result.initial_machines[g].emf, y[static_cast<Eigen::Index>(3 * g)]) * y_gen[g];
        if (!constant_power) {
            v_bus = lu.solve(source);
            return;
        }
        // Fixed point on V = Yaug^-1 (I_source + y_load V - conj(S / V)), warm-started.
        for (int it = 0;; ++it) {
            Eigen::VectorXcd current = source;
            for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
                current[i] += y_load[i] * v_bus[i] - std::conj(s_load[i] / v_bus[i]);
            const Eigen::VectorXcd next = lu.solve(current);
            const double step = (next - v_bus).cwiseAbs().maxCoeff();
            v_bus = next;
            if (step < 1e-11) return;
            if (!std::isfinite(step) || it >= 200) throw ConvergenceError(it + 1, step);
        }
    };

    auto deriv = [&](double, const Eigen::VectorXd& y) {
        solve_network(y);
        Eigen::VectorXd dy(y.size());
        for (std::size_t g = 0; g < ng; ++g) {
            const auto& gen = c.generators[g];
            const auto a = static_cast<Eigen::Index>(3 * g);
            const Complex e = std::polar(result.initial_machines[g].emf, y[a]);
            const Complex i_gen = (e - v_bus[static_cast<Eigen::Index>(gen_bus[g])]) * y_gen[g];
            const double p_elec = (e * std::conj(i_gen)).real() * base / gen.capacity;
            const double dw = y[a + 1];
            dy[a] = omega_s * dw;
            dy[a + 1] = (y[a + 2] - p_elec - gen.damping_d * dw) / (2.0 * gen.inertia_h);
            dy[a + 2] = (p_ref[g] - dw / gen.droop_r - y[a + 2]) / gen.governor_tc;
        }
        return dy;
    };

    const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon_s / cfg.step_s));
    result.horizon_s = static_cast<double>(steps) * cfg.step_s;
    result.first_event_s = cfg.events.empty() ? 0.0 : cfg.events.front().time_s;
    result.machine_hz.assign(ng, {});
    result.bus_hz.assign(n, {});
    result.bus_voltage_pu.assign(n, {});
    result.branch_loading.assign(c.branches.size(), {});
    for (const auto& gen : c.generators) result.generator_bus.push_back(gen.bus);
    for (const auto& b : c.buses) result.bus_id.push_back(b.id);
    for (const auto& br : c.branches) result.branch_label.push_back(br.label());

    std::vector<double> bus_h(n, 0.0);
    for (std::size_t g = 0; g < ng; ++g) bus_h[gen_bus[g]] += h_weight[g];

    auto record = [&](double t, const Eigen::VectorXd& y) {
        solve_network(y);
        result.time_s.push_back(t);
        double coi = 0.0;
        std::vector<double> bus_acc(n, 0.0);
        for (std::size_t g = 0; g < ng; ++g) {
            const double f = kNominalHz * (1.0 + y[static_cast<Eigen::Index>(3 * g + 1)]);
            result.machine_hz[g].push_back(f);
            coi += h_weight[g] * f;
            bus_acc[gen_bus[g]] += h_weight[g] * f;
        }
        coi /= h_total;
        result.coi_hz.push_back(coi);
        std::vector<double> vm(n), va(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Complex v = v_bus[static_cast<Eigen::Index>(i)];
            vm[i] = std::abs(v);
            va[i] = std::arg(v);
            result.bus_hz[i].push_back(bus_h[i] > 0.0 ? bus_acc[i] / bus_h[i] : coi);
            result.bus_voltage_pu[i].push_back(vm[i]);
        }
        const auto flows = branch_flows(c, vm, va);
        for (std::size_t k = 0; k < flows.size(); ++k)
            result.branch_loading[k].push_back(100.0 * std::max(std::abs(flows[k].s_from), std::abs(flows[k].s_to)) /
                                               c.branches[k].rating);
    };

    std::size_t next_event = 0;
    auto apply_due_events = [&](double t) {
        bool changed = false;
        while (next_event < cfg.events.size() && cfg.events[next_event].time_s <= t + 1e-9 * cfg.step_s) {
            const auto& ev = cfg.events[next_event++];
            const auto i = static_cast<Eigen::Index>(c.index_of(ev.bus));
            const Complex ds = Complex(ev.dp_mw, ev.dq_mvar) / base;
            s_load[i] += ds;
            if (!constant_power) {
                y_load[i] += std::conj(ds) / v0sq[static_cast<std::size_t>(i)];
                changed = true;
            }
        }
        if (changed) factorize();
    };

    auto to_states = [&](const Eigen::VectorXd& y) {
        std::vector<MachineState> out(ng);
        for (std::size_t g = 0; g < ng; ++g)
            out[g] = {y[static_cast<Eigen::Index>(3 * g)], y[static_cast<Eigen::Index>(3 * g + 1)],
                      y[static_cast<Eigen::Index>(3 * g + 2)], result.initial_machines[g].emf};
        return out;
    };

    Eigen::VectorXd y = y0;
    apply_due_events(0.0);
    record(0.0, y);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * cfg.step_s;
        y = rk4_step(deriv, t, y, cfg.step_s);
        const double t_next = static_cast<double>(k + 1) * cfg.step_s;
        apply_due_events(t_next);
        record(t_next, y);
        for (std::size_t g = 0; g < ng; ++g) {
            const double dw = y[static_cast<Eigen::Index>(3 * g + 1)];
            if (!std::isfinite(dw) || std::abs(dw) > cfg.max_speed_deviation) {
                result.abort_reason = "loss of synchronism: generator " + std::to_string(g + 1) + " at bus " +
                                      std::to_string(c.generators[g].bus) + " speed deviation " + std::to_string(dw) +
                                      " p.u. at t=" + std::to_string(t_next) + " s";
                result.final_machines = to_states(y);
                detail::finish_statistics(result);
                throw LossOfSynchronism(*result.abort_reason, std::move(result));
            }
        }
    }
    result.final_machines = to_states(y);
    detail::finish_statistics(result);
    return result;
}

}  // namespace evgrid
