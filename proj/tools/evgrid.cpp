// evgrid: power flow, transient and attack-sweep experiments on a grid case and EV fleet.
//
// Exit codes: 0 success (an infeasible attack is a result, not an error), 1 numerical
// failure, 2 bad input.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "evgrid/attack.hpp"
#include "evgrid/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace evgrid;

namespace {

#ifndef EVGRID_DATASET_DIR
#define EVGRID_DATASET_DIR "datasets/manhattan12"
#endif

struct Globals {
    std::string case_path = std::string(EVGRID_DATASET_DIR) + "/grid.txt";
    std::string fleet_path = std::string(EVGRID_DATASET_DIR) + "/fleet.txt";
    std::string out_dir = "evgrid_out";
    std::optional<double> pf;
    bool quiet = false;
};

/// Input problem: reported with exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical problem: reported with exit code 1.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConvergenceError& e) {
        throw NumericalError(name + ": " + e.what());
    } catch (const SingularJacobianError& e) {
        throw NumericalError(name + ": " + e.what());
    } catch (const LossOfSynchronism&) {
        throw;
    } catch (const NumericalError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(name + ": " + e.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        out += buf;
    }
    return out;
}

std::string fixed(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
}

class Run {
public:
    explicit Run(const Globals& g) : g_(g), started_(std::chrono::steady_clock::now()) {}

    GridCase load_case() {
        auto c = stage("loading case " + g_.case_path, [&] { return parse_grid_case(read_file(g_.case_path), g_.case_path); });
        inputs_["case"] = {{"path", g_.case_path}, {"sha256", sha256_hex(read_file(g_.case_path))}};
        return c;
    }

    EvcsFleet load_fleet() {
        auto f = stage("loading fleet " + g_.fleet_path, [&] { return parse_fleet(read_file(g_.fleet_path), g_.fleet_path); });
        inputs_["fleet"] = {{"path", g_.fleet_path}, {"sha256", sha256_hex(read_file(g_.fleet_path))}};
        return f;
    }

    AttackScenario load_scenario(const std::string& path) {
        auto s = stage("loading scenario " + path, [&] { return parse_scenario(read_file(path), path); });
        inputs_["scenario"] = {{"path", path}, {"sha256", sha256_hex(read_file(path))}};
        if (g_.pf) s.power_factor = *g_.pf;
        return s;
    }

    fs::path out_dir() {
        std::error_code ec;
        fs::create_directories(g_.out_dir, ec);
        if (ec) throw InputError("creating output directory " + g_.out_dir + ": " + ec.message());
        return g_.out_dir;
    }

    void note(const std::string& key, json value) { extra_[key] = std::move(value); }
    void output(const fs::path& p) { outputs_.push_back(p.filename().string()); }

    void write_manifest(const std::string& command) {
        json m;
        m["tool"] = "evgrid";
        m["version"] = kVersion;
        m["command"] = command;
        m["inputs"] = inputs_;
        for (auto& [k, v] : extra_.items()) m[k] = v;
        m["outputs"] = outputs_;
        m["determinism"] = "no random seeds; fixed-step integration; data files contain no timestamps";
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        m["wall_clock"] = {{"finished_utc", stamp}, {"elapsed_s", elapsed}};
        write_text(out_dir() / "manifest.json", m.dump(2) + "\n");
    }

    const Globals& globals() const { return g_; }
    void say(const std::string& s) const {
        if (!g_.quiet) std::cout << s;
    }

private:
    const Globals& g_;
    std::chrono::steady_clock::time_point started_;
    json inputs_ = json::object();
    json extra_ = json::object();
    std::vector<std::string> outputs_;
};

json scenario_json(const AttackScenario& s) {
    json relays = {{"of_na", s.relays.of_na},   {"of_ieee1547", s.relays.of_ieee1547},
                   {"uf", s.relays.uf},         {"ov", s.relays.ov},
                   {"uv", s.relays.uv},         {"line_overload_pct", s.relays.line_overload_pct},
                   {"overload_dwell", s.relays.overload_dwell_s}};
    return {{"year", s.year},
            {"operators", s.operators.empty() ? std::vector<std::string>{"all"} : s.operators},
            {"exclude_operators", s.exclude_operators},
            {"buses", s.buses},
            {"fraction", s.fraction},
            {"t_attack_s", s.t_attack_s},
            {"direction", to_string(s.direction)},
            {"power_factor", s.power_factor},
            {"horizon_s", s.horizon_s},
            {"step_s", s.step_s},
            {"relays", relays}};
}

std::vector<std::string> operator_list(const std::string& s) {
    auto ops = text::split_list(s);
    if (ops.size() == 1 && (ops[0] == "all" || ops[0] == "All")) ops.clear();
    return ops;
}

// ---------------------------------------------------------------------------
// powerflow

struct PowerflowArgs {
    std::string years = "none";
    std::string operators = "all";
    std::string out;
};

int cmd_powerflow(const Globals& g, const PowerflowArgs& a) {
    Run run(g);
    const auto c = run.load_case();
    const auto years = text::split_list(a.years);
    if (years.empty()) throw InputError("--year needs at least one value");
    const bool need_fleet = std::any_of(years.begin(), years.end(), [](const std::string& y) { return y != "none"; });
    const auto fleet = need_fleet ? run.load_fleet() : EvcsFleet{};
    if (years.size() > 1 && !a.out.empty()) throw InputError("--out takes a single --year; omit it to write one file per year");
    const auto dir = run.out_dir();
    const double pf = g.pf.value_or(1.0);

    std::ostringstream table;
    table << "Branch loading (% of rating)\n" << std::left;
    char cell[32];
    std::snprintf(cell, sizeof cell, "%-6s", "year");
    table << cell;
    for (const auto& br : c.branches) {
        std::snprintf(cell, sizeof cell, " %8s", br.label().c_str());
        table << cell;
    }
    table << "\n";
    std::vector<std::string> overloads;
    json solved = json::array();

    for (const auto& year : years) {
        BusPower ev;
        if (year != "none") {
            AttackScenario s;
            char* end = nullptr;
            s.year = std::strtod(year.c_str(), &end);
            if (year.empty() || *end != '\0') throw InputError("--year must be 'none' or a year, got '" + year + "'");
            s.operators = operator_list(a.operators);
            ev = stage("selecting EV load", [&] { return fleet_slice(fleet, s); });
        }
        const auto inj = stage("applying EV load", [&] { return apply_ev_load(base_injections(c), c, ev, pf); });
        const auto sol = stage("power flow (" + year + ")", [&] { return solve_power_flow(c, inj); });
        const auto load = line_loadings(c, sol);

        std::ostringstream csv;
        csv << "branch_from,branch_to,loading_pct,p_mw_from,q_mvar_from\n";
        for (std::size_t k = 0; k < c.branches.size(); ++k)
            csv << c.branches[k].from_bus << ',' << c.branches[k].to_bus << ',' << fixed(load[k], 4) << ','
                << fixed(sol.flows[k].s_from.real(), 4) << ',' << fixed(sol.flows[k].s_from.imag(), 4) << "\n";
        const fs::path out = a.out.empty() ? dir / ("loading_" + year + ".csv") : dir / fs::path(a.out);
        write_text(out, csv.str());
        run.output(out);

        std::snprintf(cell, sizeof cell, "%-6s", year.c_str());
        table << cell;
        for (std::size_t k = 0; k < load.size(); ++k) {
            std::snprintf(cell, sizeof cell, " %8.1f", load[k]);
            table << cell;
        }
        table << "\n";
        for (const auto& e : scan_static_overloads(load, RelaySettings{}, &c))
            overloads.push_back(year + " " + e.element_label + " " + fixed(e.value, 1) + "% OVERLOAD");
        solved.push_back({{"year", year}, {"iterations", sol.iterations}, {"max_mismatch_pu", sol.max_mismatch},
                          {"ev_load_mw", total_mw(ev)}});
    }
    for (const auto& o : overloads) table << o << "\n";
    run.say(table.str());
    run.note("operators", a.operators);
    run.note("power_factor", pf);
    run.note("solves", solved);
    run.write_manifest("powerflow");
    return 0;
}

// ---------------------------------------------------------------------------
// transient

struct TransientArgs {
    std::string scenario;
    bool gnuplot = false;
    int sample_every = 1;
};

void write_series(Run& run, const fs::path& dir, const TransientResult& r, int every) {
    const auto n = r.time_s.size();
    const auto stride = static_cast<std::size_t>(std::max(every, 1));
    std::ostringstream f, v, l;
    f << "time_s,bus_id,freq_hz\n";
    v << "time_s,bus_id,v_pu\n";
    l << "time_s,branch_from,branch_to,loading_pct\n";
    for (std::size_t k = 0; k < n; k += stride) {
        const auto t = fixed(r.time_s[k], 4);
        f << t << ",0," << fixed(r.coi_hz[k], 6) << "\n";
        for (std::size_t i = 0; i < r.bus_hz.size(); ++i) f << t << ',' << r.bus_id[i] << ',' << fixed(r.bus_hz[i][k], 6) << "\n";
        for (std::size_t i = 0; i < r.bus_voltage_pu.size(); ++i)
            v << t << ',' << r.bus_id[i] << ',' << fixed(r.bus_voltage_pu[i][k], 6) << "\n";
        for (std::size_t b = 0; b < r.branch_loading.size(); ++b) {
            const auto& label = r.branch_label[b];
            const auto dash = label.find('-');
            l << t << ',' << label.substr(0, dash) << ',' << label.substr(dash + 1) << ',' << fixed(r.branch_loading[b][k], 4)
              << "\n";
        }
    }
    for (const auto& [name, body] : {std::pair{"frequency.csv", &f}, std::pair{"voltage.csv", &v}, std::pair{"loading.csv", &l}}) {
        write_text(dir / name, body->str());
        run.output(dir / name);
    }
}

std::string gnuplot_script() {
    return "# gnuplot -p plot.gp\n"
           "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set multiplot layout 2,1\n"
           "set xlabel 'time (s)'\n"
           "set ylabel 'frequency (Hz)'\n"
           "plot 'frequency.csv' using 1:($2==0?$3:1/0) with lines title 'COI'\n"
           "set ylabel 'voltage (p.u.)'\n"
           "plot for [b=1:12] 'voltage.csv' using 1:($2==b?$3:1/0) with lines title 'bus '.b\n"
           "unset multiplot\n";
}

int cmd_transient(const Globals& g, const TransientArgs& a) {
    Run run(g);
    const auto c = run.load_case();
    const auto fleet = run.load_fleet();
    const auto s = run.load_scenario(a.scenario);
    stage("validating scenario", [&] { validate(s, fleet); return 0; });
    const auto dir = run.out_dir();
    run.note("scenario", scenario_json(s));

    json summary;
    summary["scenario"] = scenario_json(s);
    int code = 0;
    TransientResult result;
    BusPower slice;
    try {
        const auto attack = stage("transient simulation", [&] { return run_attack(c, fleet, s); });
        result = attack.transient;
        slice = attack.slice;
    } catch (const LossOfSynchronism& e) {
        result = e.partial();
        slice = fleet_slice(fleet, s);
        code = 1;
    } catch (const NumericalError& e) {
        summary["abort_reason"] = e.what();
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        run.output(dir / "summary.json");
        run.write_manifest("transient");
        throw;
    }
    write_series(run, dir, result, a.sample_every);

    const auto relays = scan_relays(result, s.relays);
    const auto verdict = blackout_verdict(relays, c);
    const auto sum = extract_summary(result);
    const double mw = total_mw(slice);
    summary["attack_mw"] = mw;
    summary["peak_hz"] = sum.peak_hz;
    summary["steady_hz"] = sum.steady_hz;
    summary["analytic_steady_hz"] = s.direction == AttackDirection::shutdown
                                        ? steady_state_frequency_analytic(c, mw)
                                        : steady_state_frequency_analytic(c, -mw);
    summary["peak_voltage_pu"] = sum.peak_voltage_pu;
    summary["settled"] = sum.settled;
    json events = json::array();
    for (const auto& e : relays)
        events.push_back({{"time_s", e.time_s}, {"kind", to_string(e.kind)}, {"element", e.element_label}, {"value", e.value}});
    summary["relay_events"] = events;
    summary["verdict"] = to_string(verdict);
    summary["abort_reason"] = result.abort_reason ? json(*result.abort_reason) : json(nullptr);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    run.output(dir / "summary.json");
    if (a.gnuplot) {
        write_text(dir / "plot.gp", gnuplot_script());
        run.output(dir / "plot.gp");
    }
    run.write_manifest("transient");

    std::ostringstream msg;
    msg << "attack " << fixed(mw, 2) << " MW at t=" << s.t_attack_s << " s: peak " << fixed(sum.peak_hz, 3) << " Hz, steady "
        << fixed(sum.steady_hz, 3) << " Hz, peak voltage " << fixed(sum.peak_voltage_pu, 4) << " p.u.\n"
        << "relay events: " << relays.size() << ", verdict: " << to_string(verdict) << "\n";
    if (result.abort_reason) msg << "aborted: " << *result.abort_reason << "\n";
    run.say(msg.str());
    if (code != 0) std::cerr << "evgrid: transient simulation: " << *result.abort_reason << "\n";
    return code;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    std::string mode = "year";
    double target_hz = 61.2;
    std::string out;
    std::string scenario;
    std::string years = "2022,2023,2024,2025,2026,2027,2028,2029,2030";
    std::string scopes = "all,tesla";
    double year = 2030.0;
    std::string operators = "Tesla";
    double tol_mw = 0.5;
};

std::vector<double> parse_years(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : text::split_list(s)) {
        char* end = nullptr;
        const double y = std::strtod(item.c_str(), &end);
        if (*end != '\0') throw InputError("bad year '" + item + "'");
        out.push_back(y);
    }
    if (out.empty()) throw InputError("no years given");
    return out;
}

std::string year_label(double y) {
    return y == std::floor(y) ? std::to_string(static_cast<long>(y)) : fixed(y, 2);
}

std::string sweep_csv(const std::vector<SweepPoint>& pts) {
    std::ostringstream csv;
    csv << "year,scope,peak_hz,steady_hz\n";
    for (const auto& p : pts) csv << year_label(p.year) << ',' << p.scope << ',' << fixed(p.peak_hz, 6) << ',' << fixed(p.steady_hz, 6) << "\n";
    return csv.str();
}

int cmd_sweep(const Globals& g, const SweepArgs& a) {
    Run run(g);
    const auto c = run.load_case();
    const auto fleet = run.load_fleet();
    AttackScenario tmpl = a.scenario.empty() ? AttackScenario{} : run.load_scenario(a.scenario);
    if (a.scenario.empty() && g.pf) tmpl.power_factor = *g.pf;
    const auto dir = run.out_dir();
    run.note("mode", a.mode);
    run.note("template", scenario_json(tmpl));
    std::ostringstream msg;

    if (a.mode == "year" || a.mode == "operator") {
        std::vector<SweepPoint> pts;
        if (a.mode == "year") {
            const auto years = parse_years(a.years);
            const auto scopes = text::split_list(a.scopes);
            pts = stage("year sweep", [&] { return year_sweep(c, fleet, scopes, years, tmpl); });
        } else {
            pts = stage("operator sweep", [&] { return per_operator_sweep(c, fleet, a.year, tmpl); });
        }
        const fs::path out = a.out.empty() ? dir / ("sweep_" + a.mode + ".csv") : dir / fs::path(a.out);
        write_text(out, sweep_csv(pts));
        run.output(out);
        for (const auto& p : pts)
            msg << year_label(p.year) << "  " << p.scope << "  " << fixed(p.mw, 3) << " MW  peak " << fixed(p.peak_hz, 3)
                << " Hz  steady " << fixed(p.steady_hz, 3) << " Hz\n";
    } else if (a.mode == "min-power") {
        if (!(a.target_hz > 0.0)) throw InputError("--target-hz must be positive");
        AttackScenario s = tmpl;
        if (a.scenario.empty()) {
            s.year = a.year;
            s.operators = operator_list(a.operators);
        }
        const auto res = stage("feasibility search", [&] { return min_attack_power(c, fleet, s, a.target_hz, a.tol_mw); });
        std::ostringstream csv;
        csv << "year,scope,target_hz,feasible,mw,fraction,fleet_mw\n";
        const std::string scope = s.operators.empty() ? "all" : text::detail::trim(a.operators);
        csv << year_label(s.year) << ',' << text::quote(scope) << ',' << fixed(a.target_hz, 4) << ','
            << (res.feasible ? "true" : "false") << ','
            << fixed(res.mw, 4) << ',' << fixed(res.fraction, 6) << ',' << fixed(res.fleet_mw, 4) << "\n";
        const fs::path out = a.out.empty() ? dir / "min_power.csv" : dir / fs::path(a.out);
        write_text(out, csv.str());
        run.output(out);
        std::ostringstream probes;
        probes << "probe,fraction,mw,peak_hz\n";
        for (std::size_t k = 0; k < res.probes.size(); ++k)
            probes << k + 1 << ',' << fixed(res.probes[k].fraction, 6) << ',' << fixed(res.probes[k].mw, 4) << ','
                   << fixed(res.probes[k].peak_hz, 6) << "\n";
        write_text(dir / "min_power_probes.csv", probes.str());
        run.output(dir / "min_power_probes.csv");
        if (res.feasible)
            msg << "minimum attack reaching " << fixed(a.target_hz, 3) << " Hz: " << fixed(res.mw, 3) << " MW ("
                << fixed(100.0 * res.fraction, 1) << "% of " << fixed(res.fleet_mw, 2) << " MW), " << res.probes.size()
                << " simulations\n";
        else
            msg << "infeasible: the full " << fixed(res.fleet_mw, 2) << " MW fleet does not reach " << fixed(a.target_hz, 3)
                << " Hz\n";
    } else {
        throw InputError("--mode must be operator, year or min-power");
    }
    run.say(msg.str());
    run.write_manifest("sweep");
    return 0;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Globals& g, const std::string& out_name) {
    Run run(g);
    const auto c = run.load_case();
    const auto fleet = run.load_fleet();
    const auto dir = run.out_dir();
    const double pf = g.pf.value_or(1.0);
    std::ostringstream md;
    md << "# manhattan12 EV charging attack report\n\n";

    md << "## Branch loading (% of rating)\n\n| Year |";
    for (const auto& br : c.branches) md << ' ' << br.label() << " |";
    md << "\n|---|";
    for (std::size_t k = 0; k < c.branches.size(); ++k) md << "---:|";
    md << "\n";
    std::vector<std::string> flagged;
    for (const std::string year : {"none", "2022", "2030", "2050"}) {
        const auto ev = year == "none" ? BusPower{} : fleet_total(fleet, std::stod(year));
        const auto sol = stage("power flow (" + year + ")", [&] { return solve_power_flow(c, apply_ev_load(base_injections(c), c, ev, pf)); });
        const auto load = line_loadings(c, sol);
        md << "| " << (year == "none" ? "no EV" : year) << " |";
        for (std::size_t k = 0; k < load.size(); ++k) {
            md << ' ' << fixed(load[k], 1) << (load[k] > 100.0 ? " **OVERLOAD**" : "") << " |";
            if (load[k] > 100.0) flagged.push_back(year + ": " + c.branches[k].label());
        }
        md << "\n";
    }
    md << "\nOverloaded: " << (flagged.empty() ? std::string("none") : "") ;
    for (std::size_t k = 0; k < flagged.size(); ++k) md << (k ? ", " : "") << flagged[k];
    md << "\n\n";

    AttackScenario tmpl;
    tmpl.power_factor = pf;
    md << "## Shutdown of each operator's chargers, 2030\n\n| Operator | MW | Peak (Hz) | Steady (Hz) |\n|---|---:|---:|---:|\n";
    const auto ops = stage("operator sweep", [&] { return per_operator_sweep(c, fleet, 2030, tmpl); });
    for (const auto& p : ops)
        md << "| " << p.scope << " | " << fixed(p.mw, 3) << " | " << fixed(p.peak_hz, 3) << " | " << fixed(p.steady_hz, 3) << " |\n";

    md << "\n## Aggregate shutdowns\n\n| Attack | MW | Peak (Hz) | Steady (Hz) | Analytic steady (Hz) | Peak V (p.u.) | Relays | Verdict |\n"
       << "|---|---:|---:|---:|---:|---:|---|---|\n";
    auto attack_row = [&](const std::string& label, AttackScenario s) {
        const auto r = stage("transient " + label, [&] { return run_attack(c, fleet, s); });
        const auto sum = extract_summary(r.transient);
        const auto events = scan_relays(r.transient, s.relays);
        std::set<std::string> kinds;
        for (const auto& e : events) kinds.insert(to_string(e.kind));
        std::string kind_list;
        for (const auto& k : kinds) kind_list += (kind_list.empty() ? "" : ", ") + k;
        md << "| " << label << " | " << fixed(total_mw(r.slice), 2) << " | " << fixed(sum.peak_hz, 3) << " | "
           << fixed(sum.steady_hz, 3) << " | " << fixed(steady_state_frequency_analytic(c, total_mw(r.slice)), 3) << " | "
           << fixed(sum.peak_voltage_pu, 4) << " | " << (kind_list.empty() ? "none" : kind_list) << " | "
           << to_string(blackout_verdict(events, c)) << " |\n";
    };
    auto sc = [&](double year, std::vector<std::string> ops_in, std::vector<std::string> excl = {}) {
        AttackScenario s = tmpl;
        s.year = year;
        s.operators = std::move(ops_in);
        s.exclude_operators = std::move(excl);
        return s;
    };
    attack_row("All chargers 2022", sc(2022, {}));
    attack_row("All chargers 2030", sc(2030, {}));
    attack_row("Tesla 2030", sc(2030, {"Tesla"}));
    attack_row("Non-Tesla 2030", sc(2030, {}, {"Tesla"}));

    md << "\n## Peak and steady-state frequency by year\n\n| Year | Scope | Peak (Hz) | Steady (Hz) |\n|---|---|---:|---:|\n";
    std::vector<double> years;
    for (int y = 2022; y <= 2030; ++y) years.push_back(y);
    for (const auto& p : stage("year sweep", [&] { return year_sweep(c, fleet, {"all", "Tesla"}, years, tmpl); }))
        md << "| " << year_label(p.year) << " | " << p.scope << " | " << fixed(p.peak_hz, 3) << " | " << fixed(p.steady_hz, 3) << " |\n";

    const auto feas = stage("feasibility search", [&] { return min_attack_power(c, fleet, sc(2030, {"Tesla"}), RelaySettings{}.of_na, 0.5); });
    md << "\n## Smallest Tesla 2030 shutdown reaching " << fixed(RelaySettings{}.of_na, 1) << " Hz\n\n";
    if (feas.feasible)
        md << fixed(feas.mw, 2) << " MW, " << fixed(100.0 * feas.fraction, 1) << "% of the " << fixed(feas.fleet_mw, 2)
           << " MW Tesla fleet (" << feas.probes.size() << " simulations).\n";
    else
        md << "Not reachable with the full fleet.\n";

    const fs::path out = dir / out_name;
    write_text(out, md.str());
    run.output(out);
    run.write_manifest("report");
    run.say("wrote " + out.string() + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EV charging attack experiments on a transmission grid model"};
    app.set_version_flag("--version", std::string("evgrid ") + kVersion);
    app.require_subcommand(1);
    Globals g;
    app.add_option("--case", g.case_path, "Grid case file");
    app.add_option("--fleet", g.fleet_path, "EV fleet file");
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_option("--pf", g.pf, "EV charging power factor")->check(CLI::Range(0.0, 1.0));
    app.add_flag("--quiet", g.quiet, "Suppress console tables");

    PowerflowArgs pfa;
    auto* pf_cmd = app.add_subcommand("powerflow", "Steady-state power flow and branch loadings");
    pf_cmd->add_option("--year", pfa.years, "none, an anchor year, or a comma list");
    pf_cmd->add_option("--operators", pfa.operators, "all, or a comma list of operators");
    pf_cmd->add_option("--out", pfa.out, "Loading CSV inside --out-dir (single year only)");

    TransientArgs ta;
    auto* tr_cmd = app.add_subcommand("transient", "Simulate one attack scenario");
    tr_cmd->add_option("--scenario", ta.scenario, "Scenario file")->required();
    tr_cmd->add_flag("--gnuplot", ta.gnuplot, "Also write plot.gp");
    tr_cmd->add_option("--sample-every", ta.sample_every, "Write every Nth time step")->check(CLI::PositiveNumber);

    SweepArgs sa;
    auto* sw_cmd = app.add_subcommand("sweep", "Operator, year or minimum-power sweeps");
    sw_cmd->add_option("--mode", sa.mode, "operator | year | min-power")->check(CLI::IsMember({"operator", "year", "min-power"}));
    sw_cmd->add_option("--target-hz", sa.target_hz, "Frequency the min-power search must reach");
    sw_cmd->add_option("--out", sa.out, "Output CSV inside --out-dir");
    sw_cmd->add_option("--scenario", sa.scenario, "Scenario template");
    sw_cmd->add_option("--years", sa.years, "Years for year mode (comma list)");
    sw_cmd->add_option("--scopes", sa.scopes, "Scopes for year mode: all and/or operators");
    sw_cmd->add_option("--year", sa.year, "Year for operator and min-power modes");
    sw_cmd->add_option("--operators", sa.operators, "Operators for min-power mode");
    sw_cmd->add_option("--tol-mw", sa.tol_mw, "Min-power tolerance in MW")->check(CLI::PositiveNumber);

    std::string report_name = "report.md";
    auto* rp_cmd = app.add_subcommand("report", "Markdown report of loadings, attacks and sweeps");
    rp_cmd->add_option("--name", report_name, "Report file name inside --out-dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pf_cmd) return cmd_powerflow(g, pfa);
        if (*tr_cmd) return cmd_transient(g, ta);
        if (*sw_cmd) return cmd_sweep(g, sa);
        if (*rp_cmd) return cmd_report(g, report_name);
    } catch (const InputError& e) {
        std::cerr << "evgrid: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "evgrid: " << e.what() << "\n";
        return 1;
    } catch (const LossOfSynchronism& e) {
        std::cerr << "evgrid: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "evgrid: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
