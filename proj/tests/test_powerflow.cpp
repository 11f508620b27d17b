#include <gtest/gtest.h>

#include <random>

#include "evgrid/powerflow.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace evgrid;

namespace {

/// Receiving-end voltage magnitude of a loaded two-bus line fed at 1 p.u.
double two_bus_voltage(double r, double x, double p, double q) {
    const double b = 2.0 * (r * p + x * q) - 1.0;
    const double c = (r * r + x * x) * (p * p + q * q);
    return std::sqrt((-b + std::sqrt(b * b - 4.0 * c)) / 2.0);
}

}  // namespace

TEST(PowerFlow, TwoBusMatchesClosedForm) {
    const auto c = fixtures::two_bus(0.01, 0.1, 50.0, 20.0);
    const auto sol = solve_power_flow(c, base_injections(c));
    EXPECT_NEAR(sol.vm[1], two_bus_voltage(0.01, 0.1, 0.5, 0.2), 1e-10);
    EXPECT_LT(sol.max_mismatch, 1e-8);
    // Generator supplies the load plus I^2 R.
    const double i2 = (0.25 + 0.04) / (sol.vm[1] * sol.vm[1]);
    EXPECT_NEAR(sol.gen_p_mw[0], 50.0 + 100.0 * 0.01 * i2, 1e-6);
}

TEST(PowerFlow, ZeroInjectionsConvergeImmediately) {
    const auto c = fixtures::two_bus();
    const auto sol = solve_power_flow(c, zero_injections(c));
    EXPECT_EQ(sol.iterations, 1);
    EXPECT_DOUBLE_EQ(sol.vm[1], 1.0);
    EXPECT_DOUBLE_EQ(sol.va[1], 0.0);
}

TEST(PowerFlow, ManhattanBaseCaseConverges) {
    const auto& c = fixtures::manhattan();
    const auto sol = solve_power_flow(c, base_injections(c));
    EXPECT_LT(sol.max_mismatch, 1e-8);
    EXPECT_LE(sol.iterations, 20);
    // The base case carries its own dispatch, so the governor pickup is only rounding.
    EXPECT_LT(std::abs(sol.slack_share_mw), 0.05);
}

TEST(PowerFlow, AgreesWithGaussSeidelOnRandomCases) {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const auto c = oracle::random_case(rng, 6);
        const auto inj = base_injections(c);
        const auto sol = solve_power_flow(c, inj, PowerFlowOptions{1e-12, 30});
        std::vector<double> p(c.bus_count()), q(c.bus_count());
        for (std::size_t i = 0; i < c.bus_count(); ++i) {
            p[i] = inj.p_mw[i] / 100.0;
            q[i] = inj.q_mvar[i] / 100.0;
        }
        const auto gs = oracle::gauss_seidel(c, p, q);
        for (std::size_t i = 0; i < c.bus_count(); ++i) worst = std::max(worst, std::abs(sol.voltage(i) - gs.v[i]));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(PowerFlow, PowerBalanceEqualsBranchLosses) {
    std::mt19937_64 rng(99);
    std::vector<GridCase> cases{fixtures::manhattan()};
    for (int k = 0; k < 30; ++k) cases.push_back(oracle::random_case(rng));
    for (const auto& c : cases) {
        const auto sol = solve_power_flow(c, base_injections(c));
        Complex injected = 0.0, losses = 0.0;
        for (const auto& s : sol.injection) injected += s;
        for (const auto& f : sol.flows) losses += f.s_from + f.s_to;
        EXPECT_NEAR(injected.real(), losses.real(), 1e-5);
        EXPECT_NEAR(injected.imag(), losses.imag(), 1e-5);
        EXPECT_GE(losses.real(), -1e-9);
    }
}

TEST(PowerFlow, GovernorModeSharesImbalanceByDroopGain) {
    auto c = fixtures::manhattan();
    const auto pre = solve_power_flow(c, base_injections(c));
    const BusPower extra{{4, 100.0}, {8, 50.0}};
    const auto post = solve_power_flow(c, apply_ev_load(base_injections(c), c, extra));
    double gain = 0.0;
    for (const auto& g : c.generators) gain += g.droop_gain();
    double pickup = 0.0;
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const double d = post.gen_p_mw[g] - pre.gen_p_mw[g];
        const double expected = (post.slack_share_mw - pre.slack_share_mw) * c.generators[g].droop_gain() / gain;
        EXPECT_NEAR(d, expected, 1e-6);
        pickup += d;
    }
    // 150 MW more load plus a little more loss.
    EXPECT_GT(pickup, 150.0);
    EXPECT_LT(pickup, 160.0);
}

TEST(PowerFlow, SingleSlackTakesAllImbalance) {
    auto c = fixtures::manhattan();
    c.slack_distribution = SlackDistribution::single;
    const auto pre = solve_power_flow(c, base_injections(c));
    const auto post = solve_power_flow(c, apply_ev_load(base_injections(c), c, {{5, 80.0}}));
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        if (c.generators[g].bus == c.slack_bus()) EXPECT_GT(post.gen_p_mw[g] - pre.gen_p_mw[g], 80.0);
        else EXPECT_NEAR(post.gen_p_mw[g], pre.gen_p_mw[g], 1e-6);
    }
}

TEST(PowerFlow, ReportsNonConvergence) {
    const auto& c = fixtures::manhattan();
    EXPECT_THROW(solve_power_flow(c, base_injections(c), 1e-8, 1), ConvergenceError);
    // Far beyond the transfer limit of the two-bus line.
    const auto heavy = fixtures::two_bus(0.01, 0.1, 50.0, 20.0);
    auto inj = base_injections(heavy);
    inj.p_mw[1] = -2000.0;
    try {
        solve_power_flow(heavy, inj);
        FAIL();
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.mismatch(), 1e-8);
    } catch (const SingularJacobianError&) {
    }
}

TEST(PowerFlow, RejectsBadInput) {
    const auto c = fixtures::two_bus();
    EXPECT_THROW(apply_ev_load(base_injections(c), c, {{2, 1.0}}, 0.0), std::invalid_argument);
    EXPECT_THROW(apply_ev_load(base_injections(c), c, {{2, 1.0}}, 1.2), std::invalid_argument);
    EXPECT_THROW(apply_ev_load(base_injections(c), c, {{7, 1.0}}), ValidationError);
    EXPECT_THROW(solve_power_flow(c, InjectionSet{}), std::invalid_argument);
    EXPECT_THROW(solve_power_flow(c, base_injections(c), PowerFlowOptions{0.0, 10}), std::invalid_argument);
}

TEST(PowerFlow, EvLoadPowerFactor) {
    const auto c = fixtures::two_bus();
    const auto inj = apply_ev_load(base_injections(c), c, {{2, 30.0}}, 0.8);
    EXPECT_NEAR(inj.load_p(1), 80.0, 1e-12);
    EXPECT_NEAR(inj.load_q(1), 20.0 + 22.5, 1e-12);
}

TEST(PowerFlow, LineLoadingUsesLargerEnd) {
    const auto c = fixtures::two_bus(0.01, 0.1, 50.0, 20.0);
    const auto sol = solve_power_flow(c, base_injections(c));
    const auto l = line_loadings(c, sol);
    const double s_from = std::abs(sol.flows[0].s_from), s_to = std::abs(sol.flows[0].s_to);
    EXPECT_GT(s_from, s_to);
    EXPECT_DOUBLE_EQ(l[0], 100.0 * s_from / 200.0);
    EXPECT_NEAR(s_to, std::hypot(50.0, 20.0), 1e-6);
}

TEST(PowerFlow, Deterministic) {
    const auto& c = fixtures::manhattan();
    const auto inj = apply_ev_load(base_injections(c), c, fleet_total(fixtures::fleet(), 2030));
    const auto a = solve_power_flow(c, inj), b = solve_power_flow(c, inj);
    EXPECT_EQ(a.vm, b.vm);
    EXPECT_EQ(a.va, b.va);
}
