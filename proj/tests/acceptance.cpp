// Acceptance run for the manhattan12 dataset: one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria.

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "evgrid/attack.hpp"
#include "oracles.hpp"

using namespace evgrid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int digits = 4) {
    char b[64];
    std::snprintf(b, sizeof b, "%.*f", digits, v);
    return b;
}

std::string sci(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.2e", v);
    return b;
}

std::string path(const std::string& name) { return std::string(EVGRID_DATASET_DIR) + "/" + name; }

const GridCase& grid() {
    static const auto c = load_grid_case(path("grid.txt"));
    return c;
}

const EvcsFleet& fleet() {
    static const auto f = load_fleet(path("fleet.txt"));
    return f;
}

AttackScenario scope(double year, const std::string& which) {
    AttackScenario s;
    s.year = year;
    if (which == "tesla") s.operators = {"Tesla"};
    if (which == "non_tesla") s.exclude_operators = {"Tesla"};
    return s;
}

// -- 1 ---------------------------------------------------------------------

Outcome impedances() {
    struct Row {
        int from, to;
        double r, x;
    };
    static constexpr std::array<Row, 11> published{{{1, 2, 0.000047, 0.000473},
                                                    {2, 3, 0.003490, 0.000433},
                                                    {3, 4, 0.000078, 0.000220},
                                                    {3, 5, 0.001400, 0.01400},
                                                    {5, 7, 0.000150, 0.001490},
                                                    {5, 8, 0.000140, 0.001390},
                                                    {5, 12, 0.000295, 0.003650},
                                                    {6, 7, 0.000160, 0.0000154},
                                                    {8, 9, 0.000140, 0.001390},
                                                    {10, 11, 0.000160, 0.001540},
                                                    {11, 12, 0.001500, 0.001490}}};
    Outcome o;
    const auto& c = load_grid_case(path("grid.txt"));
    o.check(c.branches.size() == published.size(), std::to_string(c.branches.size()) + " branches");
    std::size_t exact = 0;
    for (const auto& row : published) {
        const auto it = std::find_if(c.branches.begin(), c.branches.end(),
                                     [&](const Branch& b) { return b.from_bus == row.from && b.to_bus == row.to; });
        if (it == c.branches.end()) {
            o.check(false, "missing " + std::to_string(row.from) + "-" + std::to_string(row.to));
            continue;
        }
        const bool same = it->r == row.r && it->x == row.x;
        o.check(same, it->label() + " differs");
        exact += same;
    }
    o.note(std::to_string(exact) + "/11 bit-exact");
    return o;
}

// -- 2 ---------------------------------------------------------------------

Outcome convergence() {
    Outcome o;
    const auto sol = solve_power_flow(grid(), base_injections(grid()));
    o.check(sol.max_mismatch < 1e-8, "mismatch " + std::to_string(sol.max_mismatch));
    o.check(sol.iterations <= 20, std::to_string(sol.iterations) + " iterations");
    o.note("base case " + std::to_string(sol.iterations) + " it");

    std::mt19937_64 rng(20240601);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const auto c = oracle::random_case(rng, 6);
        const auto inj = base_injections(c);
        const auto nr = solve_power_flow(c, inj, PowerFlowOptions{1e-12, 30});
        std::vector<double> p(c.bus_count()), q(c.bus_count());
        for (std::size_t i = 0; i < c.bus_count(); ++i) {
            p[i] = inj.p_mw[i] / c.base_mva;
            q[i] = inj.q_mvar[i] / c.base_mva;
        }
        const auto gs = oracle::gauss_seidel(c, p, q);
        for (std::size_t i = 0; i < c.bus_count(); ++i) worst = std::max(worst, std::abs(nr.voltage(i) - gs.v[i]));
    }
    o.check(worst < 1e-6, "Gauss-Seidel gap " + std::to_string(worst));
    o.note("Gauss-Seidel worst " + sci(worst) + " p.u.");
    return o;
}

// -- 3 ---------------------------------------------------------------------

Outcome loadings() {
    static const std::array<std::string, 6> labels{"2-3", "3-4", "5-7", "5-8", "5-12", "11-12"};
    struct Row {
        const char* name;
        std::optional<double> year;
        std::array<double, 6> pct;
        double tol;
    };
    static const std::array<Row, 4> table{{{"2022*", std::nullopt, {52, 79, 62, 34, 62, 67}, 1.0},
                                           {"2022", 2022.0, {52, 79, 62, 34, 62, 68}, 3.0},
                                           {"2030", 2030.0, {55, 88, 64, 30, 92, 94}, 3.0},
                                           {"2050", 2050.0, {82, 136, 79, 21, 249, 232}, 3.0}}};
    Outcome o;
    const auto& c = grid();
    std::map<std::string, std::vector<double>> by_row;
    double worst = 0.0;
    for (const auto& row : table) {
        auto inj = base_injections(c);
        if (row.year) inj = apply_ev_load(inj, c, fleet_total(fleet(), *row.year));
        const auto l = line_loadings(c, solve_power_flow(c, inj));
        by_row[row.name] = l;
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const auto idx = std::find_if(c.branches.begin(), c.branches.end(),
                                          [&](const Branch& b) { return b.label() == labels[k]; }) - c.branches.begin();
            const double err = std::abs(l[static_cast<std::size_t>(idx)] - row.pct[k]);
            worst = std::max(worst, err);
            o.check(err <= row.tol, std::string(row.name) + " " + labels[k] + " " + fmt(l[static_cast<std::size_t>(idx)], 1));
        }
    }
    auto pct = [&](const char* row, const std::string& label) {
        for (std::size_t k = 0; k < c.branches.size(); ++k)
            if (c.branches[k].label() == label) return by_row[row][k];
        return 0.0;
    };
    o.check(pct("2050", "5-8") < pct("2022", "5-8"), "5-8 does not fall from 2022 to 2050");
    std::vector<std::string> over;
    for (std::size_t k = 0; k < c.branches.size(); ++k)
        if (by_row["2050"][k] > 100.0) over.push_back(c.branches[k].label());
    std::string listed;
    for (const auto& b : over) listed += (listed.empty() ? "" : ",") + b;
    o.check(over == std::vector<std::string>{"3-4", "5-12", "11-12"}, "2050 overloads: " + listed);
    o.note("worst cell error " + fmt(worst, 2) + " pts");
    return o;
}

// -- 4 ---------------------------------------------------------------------

/// Droop steady state from the generator table alone.
double droop_oracle(const GridCase& c, double dropped_mw) {
    double gain = 0.0;
    for (const auto& g : c.generators) gain += (g.capacity / c.base_mva) / g.droop_r;
    return 60.0 * (1.0 + dropped_mw / c.base_mva / gain);
}

Outcome steady_state() {
    struct Case {
        const char* name;
        double year;
        const char* scope;
        double expected, tol;
    };
    static constexpr std::array<Case, 3> cases{{{"all", 2030, "all", 60.54, 0.01},
                                                {"tesla", 2030, "tesla", 60.5, 0.05},
                                                {"non_tesla", 2030, "non_tesla", 60.032, 0.01}}};
    Outcome o;
    for (const auto& k : cases) {
        const auto s = scope(k.year, k.scope);
        const double mw = total_mw(fleet_slice(fleet(), s));
        const double analytic = droop_oracle(grid(), mw);
        const double simulated = run_attack(grid(), fleet(), s).transient.steady_hz;
        o.check(std::abs(analytic - k.expected) <= k.tol, std::string(k.name) + " oracle " + fmt(analytic));
        o.check(std::abs(simulated - analytic) <= 0.01, std::string(k.name) + " simulator " + fmt(simulated));
        o.note(std::string(k.name) + " " + fmt(analytic) + "/" + fmt(simulated));
    }
    return o;
}

// -- 5 ---------------------------------------------------------------------

Outcome peaks() {
    Outcome o;
    auto peak = [](double year, const char* which) { return run_attack(grid(), fleet(), scope(year, which)).transient.peak_hz; };
    const double all = peak(2030, "all"), tesla = peak(2030, "tesla"), non = peak(2030, "non_tesla"), y22 = peak(2022, "all");
    o.check(std::abs(all - 62.095) <= 0.3, "all 2030 " + fmt(all));
    o.check(std::abs(tesla - 61.952) <= 0.3, "tesla 2030 " + fmt(tesla));
    o.check(std::abs(non - 60.115) <= 0.05, "non-tesla 2030 " + fmt(non));
    o.check(y22 <= 60.05, "all 2022 " + fmt(y22));
    o.note("all " + fmt(all, 3) + ", tesla " + fmt(tesla, 3) + ", non-tesla " + fmt(non, 3) + ", 2022 " + fmt(y22, 3));
    return o;
}

// -- 6 ---------------------------------------------------------------------

Outcome relays() {
    Outcome o;
    auto events = [](double year, const char* which, double* peak_v = nullptr) {
        const auto run = run_attack(grid(), fleet(), scope(year, which));
        if (peak_v) *peak_v = run.transient.peak_voltage_pu;
        return scan_relays(run.transient, RelaySettings{});
    };
    auto trips = [](const std::vector<RelayEvent>& ev, RelayKind kind) {
        return std::any_of(ev.begin(), ev.end(), [&](const RelayEvent& e) { return e.kind == kind; });
    };
    double v_peak = 0.0;
    const auto all = events(2030, "all", &v_peak);
    const auto tesla = events(2030, "tesla");
    const auto y22 = events(2022, "all");
    const auto non = events(2030, "non_tesla");
    o.check(trips(all, RelayKind::over_freq_na), "all 2030 misses of_na");
    o.check(trips(all, RelayKind::over_freq_ieee), "all 2030 misses of_ieee1547");
    o.check(trips(tesla, RelayKind::over_freq_na), "tesla 2030 misses of_na");
    o.check(y22.empty(), "2022 trips " + std::to_string(y22.size()));
    o.check(non.empty(), "non-tesla trips " + std::to_string(non.size()));
    o.check(v_peak < 1.1, "peak voltage " + fmt(v_peak));
    o.note("all 2030: " + std::to_string(all.size()) + " events, peak voltage " + fmt(v_peak) + " p.u.");
    return o;
}

// -- 7 ---------------------------------------------------------------------

Outcome feasibility() {
    Outcome o;
    const auto r = min_attack_power(grid(), fleet(), scope(2030, "tesla"), 61.2, 0.5);
    o.check(r.feasible, "infeasible");
    o.check(std::abs(r.mw - 148.377) <= 0.05 * 148.377, "power " + fmt(r.mw, 2));
    o.check(std::abs(r.fraction - 0.63) <= 0.02, "fraction " + fmt(r.fraction));
    o.note(fmt(r.mw, 2) + " MW, fraction " + fmt(r.fraction) + ", " + std::to_string(r.probes.size()) + " probes");
    return o;
}

// -- 8 ---------------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EVGRID_CLI) + " --quiet " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome properties() {
    Outcome o;
    const auto& c = grid();
    const auto& f = fleet();

    {
        const auto pf = solve_power_flow(c, apply_ev_load(base_injections(c), c, fleet_total(f, 2030)));
        const auto r = simulate_transient(c, pf, SimulationConfig{});
        double drift = 0.0;
        for (double hz : r.coi_hz) drift = std::max(drift, std::abs(hz - 60.0));
        for (std::size_t g = 0; g < r.final_machines.size(); ++g) {
            drift = std::max(drift, std::abs(r.final_machines[g].angle - r.initial_machines[g].angle));
            drift = std::max(drift, std::abs(r.final_machines[g].p_mech - r.initial_machines[g].p_mech));
        }
        o.check(drift < 1e-6, "quiescent drift " + std::to_string(drift));
        o.note("drift " + sci(drift));
    }
    {
        auto s = scope(2030, "all");
        const double coarse = run_attack(c, f, s).transient.peak_hz;
        s.step_s *= 0.5;
        const double fine = run_attack(c, f, s).transient.peak_hz;
        o.check(std::abs(coarse - fine) < 0.005, "step halving moves peak " + fmt(coarse - fine, 6));
        o.note("halving " + sci(std::abs(coarse - fine)) + " Hz");
    }
    {
        bool linear = true;
        for (const char* which : {"all", "tesla", "non_tesla"}) {
            auto s = scope(2030, which);
            const auto full = fleet_slice(f, s);
            for (double a : {0.0, 0.25, 0.63, 0.9}) {
                s.fraction = a;
                const auto part = fleet_slice(f, s);
                for (const auto& [bus, mw] : full) linear = linear && part.at(bus) == a * mw;
            }
        }
        o.check(linear, "slice not linear");
    }
    {
        bool anchored = true;
        for (int year : f.anchor_years()) {
            const auto v = interpolate_year(f, year);
            for (std::size_t k = 0; k < f.records.size(); ++k) anchored = anchored && v[k] == f.records[k].power_by_year.at(year);
        }
        o.check(anchored, "interpolation misses an anchor");
    }
    {
        const auto run = run_attack(c, f, scope(2030, "all"));
        o.check(scan_relays(run.transient, {}) == scan_relays(run.transient, {}), "relay scan not idempotent");
    }
    {
        const auto base = fs::temp_directory_path() / ("evgrid_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(base);
        const std::string args = " transient --scenario " + path("scenarios/all_2030.txt");
        const bool ran = run_cli("--out-dir " + (base / "a").string() + args) == 0 &&
                         run_cli("--out-dir " + (base / "b").string() + args) == 0;
        o.check(ran, "CLI run failed");
        std::size_t files = 0;
        bool same = ran;
        if (ran)
            for (const auto& e : fs::directory_iterator(base / "a")) {
                if (e.path().filename() == "manifest.json") continue;
                same = same && slurp(e.path()) == slurp(base / "b" / e.path().filename());
                ++files;
            }
        o.check(same && files > 0, "CLI outputs differ");
        o.note(std::to_string(files) + " CLI files identical");
        fs::remove_all(base);
    }
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{{1, "dataset fidelity", 1.0, impedances},
                                          {2, "power-flow convergence", 10.0, convergence},
                                          {3, "branch loadings", 5.0, loadings},
                                          {4, "steady-state frequency", 30.0, steady_state},
                                          {5, "peak frequency", 120.0, peaks},
                                          {6, "relay verdicts", 0.0, relays},
                                          {7, "minimum attack power", 300.0, feasibility},
                                          {8, "properties", 0.0, properties}};
    int failed = 0;
    for (const auto& k : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = k.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (k.budget_s > 0.0) o.check(secs < k.budget_s, "took " + fmt(secs, 2) + " s, budget " + fmt(k.budget_s, 0) + " s");
        std::printf("criterion %d %-24s %s  %.2fs  %s\n", k.id, k.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
        failed += !o.pass;
    }
    std::fflush(stdout);
    return failed;
}
