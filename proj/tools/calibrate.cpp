// Regenerates datasets/manhattan12/{grid,fleet}.txt from calibration_inputs.txt.
//
//   calibrate --inputs calibration_inputs.txt --out-dir datasets/manhattan12
//
// Stage 1 (static): base loads, dispatch and governor participation are fitted with
// Levenberg-Marquardt so the power flow reproduces the published branch loadings. Branch
// ratings are set so the no-EV loadings match exactly.
// Stage 2 (droop): the total governor gain is fixed by the published aggregate steady-state
// frequency.
// Stage 3 (inertia): a common inertia constant is found by bisection so the smallest Tesla
// shutdown reaching the 61.2 Hz relay is the configured fraction of the Tesla fleet.
// Stage 4 (operators): each non-Tesla operator's 2030 total is the shutdown size whose peak
// matches its published peak; the remainder of the non-Tesla load is "Other".

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "evgrid/attack.hpp"

namespace {

using namespace evgrid;

const std::vector<int> kLoadBuses{4, 5, 8, 12};
const std::vector<int> kYears{2022, 2030, 2050};

struct Inputs {
    text::Document doc;
    std::vector<Branch> network;
    std::vector<Bus> buses;
    std::map<int, std::map<std::string, double>> ev;  // bus -> column -> MW
    std::vector<std::string> loading_branches;
    std::map<std::string, std::vector<double>> loading;  // year label -> targets
    std::vector<std::pair<std::string, double>> operator_peak;
    std::map<std::string, double> frequency, machine, seed;
};

std::map<std::string, double> key_numbers(const text::Document& doc, const char* name) {
    const auto* s = doc.find(name);
    if (!s) throw ParseError(doc.source, 0, std::string("missing [") + name + "]");
    const text::KeyValues kv(*s, doc.source);
    std::map<std::string, double> out;
    for (const auto& k : kv.keys()) out[k] = *kv.number(k);
    return out;
}

const text::Section& section(const text::Document& doc, const char* name) {
    const auto* s = doc.find(name);
    if (!s) throw ParseError(doc.source, 0, std::string("missing [") + name + "]");
    return *s;
}

Inputs read_inputs(const std::string& path) {
    Inputs in;
    in.doc = text::parse_file(path);
    const auto& src = in.doc.source;
    {
        const text::Table t(section(in.doc, "network"), src);
        for (std::size_t r = 0; r < t.rows(); ++r) {
            Branch br;
            br.from_bus = t.integer(r, "from_bus");
            br.to_bus = t.integer(r, "to_bus");
            br.r = t.num(r, "r");
            br.x = t.num(r, "x");
            const auto& sv = t.str(r, "side_voltages");
            const auto slash = sv.find('/');
            br.from_kv = std::stod(sv.substr(0, slash));
            br.to_kv = std::stod(sv.substr(slash + 1));
            br.kind = br.from_kv == br.to_kv ? BranchKind::line : BranchKind::transformer;
            in.network.push_back(br);
        }
    }
    {
        const text::Table t(section(in.doc, "bus"), src);
        for (std::size_t r = 0; r < t.rows(); ++r) {
            Bus b;
            b.id = t.integer(r, "id");
            b.name = "Bus " + std::to_string(b.id);
            b.nominal_kv = t.num(r, "nominal_kv");
            const auto& k = t.str(r, "kind");
            b.kind = k == "slack" ? BusKind::slack : k == "pv" ? BusKind::pv : BusKind::pq;
            in.buses.push_back(b);
        }
    }
    {
        const auto& s = section(in.doc, "ev_load");
        const text::Table t(s, src);
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (const auto& col : s.lines.front().tokens)
                if (col != "bus") in.ev[t.integer(r, "bus")][col] = t.num(r, col);
    }
    {
        const auto& s = section(in.doc, "loading");
        const text::Table t(s, src);
        in.loading_branches.assign(s.lines.front().tokens.begin() + 1, s.lines.front().tokens.end());
        for (std::size_t r = 0; r < t.rows(); ++r)
            for (const auto& col : in.loading_branches) in.loading[t.str(r, "year")].push_back(t.num(r, col));
    }
    {
        const text::Table t(section(in.doc, "operator_peak"), src);
        for (std::size_t r = 0; r < t.rows(); ++r) in.operator_peak.emplace_back(t.str(r, "operator"), t.num(r, "peak_hz"));
    }
    in.frequency = key_numbers(in.doc, "frequency");
    in.machine = key_numbers(in.doc, "machine");
    in.seed = key_numbers(in.doc, "seed");
    return in;
}

double ev(const Inputs& in, int bus, const std::string& scope, int year) {
    return in.ev.at(bus).at(scope + "_" + std::to_string(year));
}

double ev_total(const Inputs& in, const std::string& scope, int year) {
    double s = 0.0;
    for (int b : kLoadBuses) s += ev(in, b, scope, year);
    return s;
}

std::size_t find_branch(const std::vector<Branch>& brs, const std::string& label) {
    for (std::size_t k = 0; k < brs.size(); ++k)
        if (brs[k].label() == label) return k;
    throw ValidationError("no branch " + label);
}

// Static parameters, all positive: p = seed * exp(x).
struct StaticParams {
    std::map<int, double> load_p, load_q, p_set, gain;
};

const std::vector<std::string> kFitted{"load_p_4", "load_p_5", "load_p_8", "load_p_12", "load_q_4", "load_q_5", "load_q_8",
                                       "load_q_12", "p_set_1", "p_set_9", "gain_1", "gain_6", "gain_9", "gain_10"};

StaticParams unpack(const Inputs& in, const Eigen::VectorXd& x) {
    StaticParams p;
    for (std::size_t k = 0; k < kFitted.size(); ++k) {
        const auto& name = kFitted[k];
        const double v = in.seed.at(name) * std::exp(x[static_cast<Eigen::Index>(k)]);
        const int bus = std::stoi(name.substr(name.rfind('_') + 1));
        if (name.starts_with("load_p")) p.load_p[bus] = v;
        else if (name.starts_with("load_q")) p.load_q[bus] = v;
        else if (name.starts_with("p_set")) p.p_set[bus] = v;
        else p.gain[bus] = v;
    }
    p.p_set[10] = in.seed.at("p_set_10");
    p.p_set[6] = 0.0;
    return p;
}

double total_gain(const Inputs& in) {
    // 60 + 60 * dP / K = f_steady for the aggregate 2030 shutdown.
    return kNominalHz * ev_total(in, "all", 2030) / kSystemBaseMva / (in.frequency.at("all_2030_steady_hz") - kNominalHz);
}

GridCase build_case(const Inputs& in, const StaticParams& p, double inertia_h) {
    GridCase c;
    c.slack_distribution = SlackDistribution::governor;
    c.buses = in.buses;
    for (auto& b : c.buses) {
        b.base_load_p = p.load_p.count(b.id) ? p.load_p.at(b.id) : 0.0;
        b.base_load_q = p.load_q.count(b.id) ? p.load_q.at(b.id) : 0.0;
    }
    c.branches = in.network;
    for (auto& br : c.branches) br.rating = 1.0;
    double gain_sum = 0.0;
    for (const auto& [_, g] : p.gain) gain_sum += g;
    const double k_total = total_gain(in);
    const double r = in.machine.at("droop_r");
    for (const auto& [bus, g] : p.gain) {
        Generator gen;
        gen.bus = bus;
        gen.p_set = p.p_set.at(bus);
        gen.capacity = g / gain_sum * k_total * c.base_mva * r;
        gen.inertia_h = inertia_h;
        gen.droop_r = r;
        gen.governor_tc = in.machine.at("governor_tc");
        gen.damping_d = in.machine.at("damping_d");
        gen.xd_transient = in.machine.at("xd_transient");
        c.generators.push_back(gen);
    }
    return c;
}

BusPower ev_slice(const Inputs& in, const std::string& scope, int year) {
    BusPower s;
    for (int b : kLoadBuses) s[b] = ev(in, b, scope, year);
    return s;
}

PowerFlowSolution solve_with_ev(const GridCase& c, const BusPower& ev_load) {
    return solve_power_flow(c, apply_ev_load(base_injections(c), c, ev_load));
}

BusPower subtract(BusPower a, const BusPower& b) {
    for (const auto& [bus, mw] : b) a[bus] -= mw;
    return a;
}

// Raw apparent-power flows (MVA) per branch for a year label ("none" = no EV load).
std::vector<double> raw_flows(const Inputs& in, const GridCase& c, const std::string& year) {
    const auto sol = solve_with_ev(c, year == "none" ? BusPower{} : ev_slice(in, "all", std::stoi(year)));
    std::vector<double> out;
    for (const auto& f : sol.flows) out.push_back(std::max(std::abs(f.s_from), std::abs(f.s_to)));
    return out;
}

// Quasi-static frequency after shutting down `dropped` from the 2030 state: the governor
// pickup of the post-event power flow includes the change in losses, the droop oracle does not.
// Returns (power-flow frequency, oracle frequency).
std::pair<double, double> quasi_static_frequency(const Inputs& in, const GridCase& c, const BusPower& dropped) {
    const auto all = ev_slice(in, "all", 2030);
    const auto pre = solve_with_ev(c, all);
    const auto post = solve_with_ev(c, subtract(all, dropped));
    double k = 0.0, mw = 0.0;
    for (const auto& g : c.generators) k += g.droop_gain(c.base_mva);
    for (const auto& [_, v] : dropped) mw += v;
    const double pf = kNominalHz - kNominalHz * (post.slack_share_mw - pre.slack_share_mw) / c.base_mva / k;
    return {pf, kNominalHz + kNominalHz * mw / c.base_mva / k};
}

const std::vector<std::string> kYearRows{"none", "2022", "2030", "2050"};

// Steady-state residual weight: 0.003 Hz of loss-induced error costs as much as 1 loading point.
constexpr double kSteadyWeightHz = 0.003;

struct StaticFunctor {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const Inputs* in;

    int inputs() const { return static_cast<int>(kFitted.size()); }
    int values() const { return 18 + 4 + 2; }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
        const auto p = unpack(*in, x);
        const auto c = build_case(*in, p, 1.0);
        f.setConstant(values(), 0.0);
        try {
            const auto base = raw_flows(*in, c, "none");
            Eigen::Index r = 0;
            for (int y : kYears) {
                const auto flows = raw_flows(*in, c, std::to_string(y));
                for (std::size_t k = 0; k < in->loading_branches.size(); ++k) {
                    const auto b = find_branch(c.branches, in->loading_branches[k]);
                    const double rating = base[b] / in->loading.at("none")[k] * 100.0;
                    f[r++] = 100.0 * flows[b] / rating - in->loading.at(std::to_string(y))[k];
                }
            }
            // Keep every load at or below unity reactive-to-active ratio.
            for (int b : kLoadBuses) f[r++] = std::max(p.load_q.at(b) - p.load_p.at(b), 0.0) / 20.0;
            for (const char* scope : {"all", "tesla"}) {
                const auto [pf, oracle] = quasi_static_frequency(*in, c, ev_slice(*in, scope, 2030));
                f[r++] = (pf - oracle) / kSteadyWeightHz;
            }
        } catch (const std::exception&) {
            f.setConstant(values(), 1e3);
        }
        return 0;
    }
};

// Sets every branch rating: listed branches reproduce the no-EV loadings, the rest are rated
// at 125% of the largest flow over the studied years.
void assign_ratings(const Inputs& in, GridCase& c) {
    std::vector<double> worst(c.branches.size(), 0.0);
    for (const auto& y : kYearRows) {
        const auto f = raw_flows(in, c, y);
        for (std::size_t k = 0; k < f.size(); ++k) worst[k] = std::max(worst[k], f[k]);
    }
    const auto base = raw_flows(in, c, "none");
    for (std::size_t k = 0; k < c.branches.size(); ++k) c.branches[k].rating = std::round(worst[k] * 1.25 + 0.5);
    for (std::size_t k = 0; k < in.loading_branches.size(); ++k) {
        const auto b = find_branch(c.branches, in.loading_branches[k]);
        c.branches[b].rating = std::round(base[b] / in.loading.at("none")[k] * 1000.0) / 10.0;
    }
}

// Moves the solved base-case dispatch into p_set so the base case needs no slack pickup, and
// sizes each machine to at least 125% of its dispatch. Droop is rescaled with the capacity so
// every machine keeps its fitted gain.
void absorb_dispatch(GridCase& c) {
    const auto sol = solve_power_flow(c, base_injections(c));
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        auto& gen = c.generators[g];
        const double gain = gen.droop_gain(c.base_mva);
        gen.p_set = std::round(sol.gen_p_mw[g] * 100.0) / 100.0;
        gen.capacity = std::round(std::max(gen.capacity, 1.25 * gen.p_set));
        gen.droop_r = gen.capacity / c.base_mva / gain;
    }
}

EvcsFleet make_fleet(const Inputs& in, const std::vector<std::pair<std::string, double>>& operator_2030_mw,
                     std::vector<std::string>* notes) {
    EvcsFleet f;
    const double residual_2030 = ev_total(in, "all", 2030) - ev_total(in, "tesla", 2030);
    double assigned = 0.0;
    for (const auto& [_, mw] : operator_2030_mw) assigned += mw;
    if (assigned > residual_2030 + 1e-9) throw ValidationError("operator totals exceed the non-Tesla load");
    auto shares = operator_2030_mw;
    shares.emplace_back("Other", residual_2030 - assigned);

    for (int b : kLoadBuses) {
        FleetRecord all{b, kAllOperators, {}}, tesla{b, "Tesla", {}};
        for (int y : kYears) {
            all.power_by_year[y] = ev(in, b, "all", y);
            tesla.power_by_year[y] = ev(in, b, "tesla", y);
        }
        f.records.push_back(all);
        if (notes) notes->push_back("published aggregate");
        f.records.push_back(tesla);
        if (notes) notes->push_back("published Tesla");
        for (std::size_t k = 0; k < shares.size(); ++k) {
            FleetRecord r{b, shares[k].first, {}};
            for (int y : kYears) {
                const double residual = all.power_by_year[y] - tesla.power_by_year[y];
                r.power_by_year[y] = residual <= 0.0 ? 0.0 : residual * shares[k].second / residual_2030;
            }
            // Last operator at the bus takes the rounding remainder so the rows sum exactly.
            if (k + 1 == shares.size()) {
                for (int y : kYears) {
                    double others = tesla.power_by_year[y];
                    for (std::size_t j = f.records.size() - k; j < f.records.size(); ++j) others += f.records[j].power_by_year[y];
                    r.power_by_year[y] = std::max(all.power_by_year[y] - others, 0.0);
                }
            }
            f.records.push_back(r);
            if (notes)
                notes->push_back(k + 1 == shares.size() ? "derived: non-Tesla remainder"
                                                        : "derived: share of the non-Tesla load sized from the operator peak");
        }
    }
    validate(f);
    return f;
}

AttackScenario scenario(double year, std::vector<std::string> ops, double fraction = 1.0) {
    AttackScenario s;
    s.year = year;
    s.operators = std::move(ops);
    s.fraction = fraction;
    return s;
}

template <typename F>
double bisect(F&& f, double lo, double hi, int iters) {
    // f(lo) and f(hi) have opposite signs.
    const bool rising = f(hi) > 0.0;
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        ((f(mid) > 0.0) == rising ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fit the manhattan12 dataset to its published targets"};
    std::string inputs_path = "datasets/manhattan12/calibration_inputs.txt";
    std::string out_dir = "datasets/manhattan12";
    app.add_option("--inputs", inputs_path, "Frozen calibration inputs")->check(CLI::ExistingFile);
    app.add_option("--out-dir", out_dir, "Where grid.txt and fleet.txt are written");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto in = read_inputs(inputs_path);

        // Stage 1.
        StaticFunctor functor{&in};
        Eigen::NumericalDiff<StaticFunctor> numdiff(functor, 1e-7);
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<StaticFunctor>> lm(numdiff);
        lm.parameters.maxfev = 20000;
        lm.parameters.xtol = 1e-10;
        lm.parameters.ftol = 1e-12;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kFitted.size()));
        Eigen::VectorXd f0(functor.values());
        functor(x, f0);
        lm.minimize(x);
        Eigen::VectorXd f1(functor.values());
        functor(x, f1);
        std::cout << "static fit: cost " << fmt(0.5 * f0.squaredNorm(), 4) << " -> " << fmt(0.5 * f1.squaredNorm(), 4)
                  << " after " << lm.nfev << " evaluations\n";

        const auto params = unpack(in, x);
        GridCase c = build_case(in, params, 1.0);
        absorb_dispatch(c);
        assign_ratings(in, c);

        // Stage 3. Preliminary fleet: the non-Tesla load is one operator.
        EvcsFleet fleet = make_fleet(in, {}, nullptr);
        const double target_fraction = in.machine.at("target_tesla_fraction");
        const double of_na = in.frequency.at("relay_of_na_hz");
        auto tesla_peak_at = [&](double h) {
            for (auto& g : c.generators) g.inertia_h = h;
            return peak_frequency(c, fleet, scenario(2030, {"Tesla"}, target_fraction));
        };
        const double h = bisect([&](double hv) { return tesla_peak_at(hv) - of_na; }, 0.05, 5.0, 40);
        for (auto& g : c.generators) g.inertia_h = std::round(h * 1e5) / 1e5;
        std::cout << "inertia: H = " << fmt(c.generators.front().inertia_h, 5) << " s on machine base\n";

        // Stage 4.
        const double residual_2030 = ev_total(in, "all", 2030) - ev_total(in, "tesla", 2030);
        std::vector<std::pair<std::string, double>> operator_mw;
        for (const auto& [name, peak] : in.operator_peak) {
            auto peak_of = [&](double mw) {
                AttackScenario s = scenario(2030, {"Other"}, mw / residual_2030);
                return peak_frequency(c, fleet, s) - peak;
            };
            const double mw = bisect(peak_of, 0.0, residual_2030, 40);
            operator_mw.emplace_back(name, std::round(mw * 1e4) / 1e4);
            std::cout << "operator " << name << ": " << fmt(operator_mw.back().second, 4) << " MW in 2030\n";
        }
        std::vector<std::string> notes;
        fleet = make_fleet(in, operator_mw, &notes);

        // Outputs.
        std::filesystem::create_directories(out_dir);
        std::ostringstream grid_header;
        grid_header << "manhattan12: 12-bus Manhattan transmission model, 100 MVA base.\n"
                    << "Generated by tools/calibrate from calibration_inputs.txt; do not edit by hand.\n"
                    << "Branch r/x/side voltages are the published line data. Loads, dispatch, governor\n"
                    << "participation and ratings are fitted to the published loadings; droop gains to the\n"
                    << "published steady-state frequency; inertia to the published minimum attack size.";
        std::ofstream(out_dir + "/grid.txt", std::ios::binary) << write_grid_case(c, grid_header.str());
        std::ostringstream fleet_header;
        fleet_header << "manhattan12 EV charging fleet, MW per bus and operator at each anchor year.\n"
                     << "Generated by tools/calibrate from calibration_inputs.txt; do not edit by hand.\n"
                     << "\"All\" and Tesla rows are published. Other operators split the All minus Tesla\n"
                     << "residual in fixed shares; each share is sized so that operator's 2030 shutdown\n"
                     << "reproduces its published peak frequency, and \"Other\" holds what is left.";
        std::ofstream(out_dir + "/fleet.txt", std::ios::binary) << write_fleet(fleet, fleet_header.str(), notes);

        // Report.
        const auto reloaded = load_grid_case(out_dir + "/grid.txt");
        const auto refleet = load_fleet(out_dir + "/fleet.txt");
        std::cout << "\nloadings (model / target):\n";
        for (const auto& y : kYearRows) {
            auto inj = base_injections(reloaded);
            if (y != "none") inj = apply_ev_load(inj, reloaded, fleet_total(refleet, std::stod(y)));
            const auto l = line_loadings(reloaded, solve_power_flow(reloaded, inj));
            std::cout << "  " << y;
            for (std::size_t k = 0; k < in.loading_branches.size(); ++k)
                std::cout << "  " << in.loading_branches[k] << " " << fmt(l[reloaded.branch_index(
                                                                                std::stoi(in.loading_branches[k]),
                                                                                std::stoi(in.loading_branches[k].substr(
                                                                                    in.loading_branches[k].find('-') + 1)))],
                                                                            1)
                          << "/" << fmt(in.loading.at(y)[k], 0);
            std::cout << "\n";
        }
        for (const char* scope : {"all", "tesla"}) {
            const auto [pf, oracle] = quasi_static_frequency(in, reloaded, ev_slice(in, scope, 2030));
            std::cout << "quasi-static " << scope << " 2030: " << fmt(pf, 4) << " (droop " << fmt(oracle, 4) << ")\n";
        }
        std::cout << "\nshutdown attacks (peak / steady / analytic steady / peak voltage):\n";
        auto report = [&](const std::string& label, AttackScenario s) {
            const auto run = run_attack(reloaded, refleet, s);
            const auto sum = extract_summary(run.transient);
            std::cout << "  " << label << ": " << fmt(sum.peak_hz) << " / " << fmt(sum.steady_hz, 4) << " / "
                      << fmt(steady_state_frequency_analytic(reloaded, total_mw(run.slice)), 4) << " / "
                      << fmt(sum.peak_voltage_pu, 4) << (sum.settled ? "" : "  (not settled)") << "\n";
        };
        report("all 2030", scenario(2030, {}));
        report("tesla 2030", scenario(2030, {"Tesla"}));
        AttackScenario non_tesla = scenario(2030, {});
        non_tesla.exclude_operators = {"Tesla"};
        report("non-tesla 2030", non_tesla);
        report("all 2022", scenario(2022, {}));
        for (const auto& op : refleet.operators()) report(op + " 2030", scenario(2030, {op}));
        const auto feas = min_attack_power(reloaded, refleet, scenario(2030, {"Tesla"}), of_na, 0.5);
        std::cout << "\nminimum Tesla attack for " << of_na << " Hz: " << fmt(feas.mw, 2) << " MW, fraction "
                  << fmt(feas.fraction, 4) << "\n";
    } catch (const std::exception& e) {
        std::cerr << "calibrate: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
