#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evgrid/dynamics.hpp"
#include "evgrid/error.hpp"
#include "evgrid/grid.hpp"
#include "evgrid/powerflow.hpp"
#include "evgrid/protection.hpp"
#include "evgrid/text_format.hpp"

namespace evgrid {

// ---------------------------------------------------------------------------
// EVCS fleet registry

inline constexpr const char* kAllOperators = "All";

struct FleetRecord {
    int bus = 0;
    std::string operator_name;
    std::map<int, double> power_by_year;  // anchor year -> MW
};

struct EvcsFleet {
    std::vector<FleetRecord> records;

    /// Operator names in file order, without the aggregate row.
    std::vector<std::string> operators() const {
        std::vector<std::string> out;
        for (const auto& r : records)
            if (r.operator_name != kAllOperators && std::find(out.begin(), out.end(), r.operator_name) == out.end())
                out.push_back(r.operator_name);
        return out;
    }

    std::vector<int> buses() const {
        std::set<int> s;
        for (const auto& r : records) s.insert(r.bus);
        return {s.begin(), s.end()};
    }

    std::vector<int> anchor_years() const {
        std::set<int> s;
        for (const auto& r : records)
            for (const auto& [y, _] : r.power_by_year) s.insert(y);
        return {s.begin(), s.end()};
    }
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return s;
}

inline bool same_name(const std::string& a, const std::string& b) { return lower(a) == lower(b); }

}  // namespace detail

inline constexpr double kFleetSumTolerance = 1e-4;  // MW

inline void validate(const EvcsFleet& f) {
    if (f.records.empty()) throw ValidationError("fleet has no records");
    const auto years = f.anchor_years();
    for (const auto& r : f.records) {
        if (r.operator_name.empty()) throw ValidationError("fleet record at bus " + std::to_string(r.bus) + " has an empty operator");
        for (int y : years) {
            const auto it = r.power_by_year.find(y);
            if (it == r.power_by_year.end())
                throw ValidationError("fleet record " + r.operator_name + "@bus" + std::to_string(r.bus) + " has no value for " + std::to_string(y));
            if (!(it->second >= 0.0))
                throw ValidationError("fleet record " + r.operator_name + "@bus" + std::to_string(r.bus) + " has negative power in " + std::to_string(y));
        }
    }
    for (int bus : f.buses()) {
        const FleetRecord* all = nullptr;
        std::map<int, double> sum;
        bool has_operators = false;
        for (const auto& r : f.records) {
            if (r.bus != bus) continue;
            if (r.operator_name == kAllOperators) {
                if (all) throw ValidationError("bus " + std::to_string(bus) + " has two aggregate rows");
                all = &r;
                continue;
            }
            has_operators = true;
            for (const auto& [y, mw] : r.power_by_year) sum[y] += mw;
        }
        if (!all || !has_operators) continue;
        for (const auto& [y, mw] : all->power_by_year)
            if (std::abs(sum[y] - mw) > kFleetSumTolerance)
                throw ValidationError("bus " + std::to_string(bus) + " " + std::to_string(y) + ": operators sum to " +
                                      std::to_string(sum[y]) + " MW but the aggregate row says " + std::to_string(mw));
    }
}

/// Columns: bus operator pYYYY_mw ... (any number of anchor years).
inline EvcsFleet parse_fleet(std::string_view content, const std::string& source = "<memory>") {
    const auto doc = text::parse(content, source);
    const auto* s = doc.find("fleet");
    if (!s) throw ParseError(source, 0, "missing [fleet] section");
    const text::Table t(*s, source);
    t.require({"bus", "operator"});
    std::vector<std::pair<int, std::string>> year_cols;
    for (const auto& col : s->lines.front().tokens) {
        if (col.size() > 4 && col.front() == 'p' && col.ends_with("_mw")) {
            const auto digits = col.substr(1, col.size() - 4);
            if (std::all_of(digits.begin(), digits.end(), [](unsigned char ch) { return std::isdigit(ch); }))
                year_cols.emplace_back(std::stoi(digits), col);
        }
    }
    if (year_cols.empty()) throw ParseError(source, s->number, "[fleet] has no pYYYY_mw columns");
    EvcsFleet f;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        FleetRecord rec;
        rec.bus = t.integer(r, "bus");
        rec.operator_name = t.str(r, "operator");
        for (const auto& [year, col] : year_cols) rec.power_by_year[year] = t.num(r, col);
        f.records.push_back(std::move(rec));
    }
    validate(f);
    return f;
}

inline EvcsFleet load_fleet(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_fleet(ss.str(), path);
}

/// Serializes a fleet in the format accepted by parse_fleet. notes[k], when present, is
/// written as a trailing comment on record k.
inline std::string write_fleet(const EvcsFleet& f, const std::string& header_comment = {},
                               const std::vector<std::string>& notes = {}) {
    std::ostringstream out;
    if (!header_comment.empty()) {
        std::istringstream lines(header_comment);
        for (std::string l; std::getline(lines, l);) out << (l.empty() ? "#" : "# " + l) << "\n";
        out << "\n";
    }
    const auto years = f.anchor_years();
    out << "[fleet]\nbus operator";
    for (int y : years) out << " p" << y << "_mw";
    out << "\n";
    for (std::size_t k = 0; k < f.records.size(); ++k) {
        const auto& r = f.records[k];
        out << r.bus << ' ' << text::quote(r.operator_name);
        for (int y : years) out << ' ' << detail::format_number(r.power_by_year.at(y));
        if (k < notes.size() && !notes[k].empty()) out << "  # " << notes[k];
        out << "\n";
    }
    return out.str();
}

/// Piecewise-linear power of every record at a (fractional) year, in record order.
inline std::vector<double> interpolate_year(const EvcsFleet& f, double year) {
    const auto years = f.anchor_years();
    if (years.empty() || year < years.front() || year > years.back())
        throw std::out_of_range("year " + std::to_string(year) + " outside the fleet anchor range");
    std::vector<double> out;
    out.reserve(f.records.size());
    for (const auto& r : f.records) {
        auto hi = r.power_by_year.lower_bound(static_cast<int>(std::ceil(year)));
        if (hi == r.power_by_year.end()) hi = std::prev(hi);
        if (hi->first == year || hi == r.power_by_year.begin()) {
            out.push_back(hi->second);
            continue;
        }
        const auto lo = std::prev(hi);
        const double w = (year - lo->first) / static_cast<double>(hi->first - lo->first);
        out.push_back(lo->second + w * (hi->second - lo->second));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Attack scenarios

enum class AttackDirection { shutdown, surge };

inline const char* to_string(AttackDirection d) { return d == AttackDirection::shutdown ? "shutdown" : "surge"; }

struct AttackScenario {
    double year = 2030.0;
    std::vector<std::string> operators;          // empty = all
    std::vector<std::string> exclude_operators;  // removed from the operator set
    std::vector<int> buses;                      // empty = all
    double fraction = 1.0;
    double t_attack_s = 1.0;
    AttackDirection direction = AttackDirection::shutdown;
    double power_factor = 1.0;
    double horizon_s = 25.0;
    double step_s = 0.01;
    RelaySettings relays;
};

/// Operators the scenario manipulates, resolved against the fleet. Throws on unknown names.
inline std::vector<std::string> resolve_operators(const EvcsFleet& f, const AttackScenario& s) {
    const auto known = f.operators();
    auto canonical = [&](const std::string& name) {
        for (const auto& k : known)
            if (detail::same_name(k, name)) return k;
        throw ValidationError("unknown operator '" + name + "'");
    };
    std::vector<std::string> chosen;
    const bool everyone = s.operators.empty() ||
                          (s.operators.size() == 1 && (detail::same_name(s.operators[0], "all")));
    if (everyone) chosen = known;
    else
        for (const auto& name : s.operators) chosen.push_back(canonical(name));
    for (const auto& name : s.exclude_operators) {
        const auto c = canonical(name);
        chosen.erase(std::remove(chosen.begin(), chosen.end(), c), chosen.end());
    }
    return chosen;
}

inline void validate(const AttackScenario& s, const EvcsFleet& f) {
    if (!(s.fraction >= 0.0 && s.fraction <= 1.0)) throw ValidationError("attack fraction must lie in [0, 1]");
    if (s.t_attack_s < 0.0) throw ValidationError("attack time must be non-negative");
    if (!(s.power_factor > 0.0 && s.power_factor <= 1.0)) throw ValidationError("power factor must lie in (0, 1]");
    if (!(s.step_s > 0.0) || s.horizon_s < s.t_attack_s) throw ValidationError("horizon must cover the attack instant");
    resolve_operators(f, s);
    const auto buses = f.buses();
    for (int b : s.buses)
        if (std::find(buses.begin(), buses.end(), b) == buses.end())
            throw ValidationError("bus " + std::to_string(b) + " has no fleet records");
    s.relays.validate();
}

/// fraction x sum of the matching records' power at the scenario year, per bus.
inline BusPower fleet_slice(const EvcsFleet& f, const AttackScenario& s) {
    validate(s, f);
    const auto ops = resolve_operators(f, s);
    const auto power = interpolate_year(f, s.year);
    const auto buses = s.buses.empty() ? f.buses() : s.buses;
    BusPower out;
    for (int b : buses) out[b] = 0.0;
    for (std::size_t k = 0; k < f.records.size(); ++k) {
        const auto& r = f.records[k];
        if (!out.count(r.bus) || std::find(ops.begin(), ops.end(), r.operator_name) == ops.end()) continue;
        out[r.bus] += power[k];
    }
    for (auto& [_, mw] : out) mw *= s.fraction;
    return out;
}

/// Total EV charging per bus at a year (every operator).
inline BusPower fleet_total(const EvcsFleet& f, double year) {
    AttackScenario all;
    all.year = year;
    return fleet_slice(f, all);
}

inline double total_mw(const BusPower& p) {
    double s = 0.0;
    for (const auto& [_, mw] : p) s += mw;
    return s;
}

/// Simultaneous load steps at t_attack: shutdown removes the charging power, surge adds it.
inline std::vector<LoadStep> to_events(const BusPower& slice, double t_attack_s, AttackDirection direction,
                                       double power_factor = 1.0) {
    if (t_attack_s < 0.0) throw std::invalid_argument("attack time must be non-negative");
    const double sign = direction == AttackDirection::shutdown ? -1.0 : 1.0;
    const double q_ratio = std::tan(std::acos(power_factor));
    std::vector<LoadStep> out;
    for (const auto& [bus, mw] : slice) {
        if (mw == 0.0) continue;
        out.push_back({t_attack_s, bus, sign * mw, sign * mw * q_ratio});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Running attacks

struct AttackRun {
    BusPower slice;
    PowerFlowSolution pre_event;
    TransientResult transient;
};

/// Pre-event state: base load plus every charger at the scenario year. Then the scenario's
/// slice is switched at t_attack.
inline AttackRun run_attack(const GridCase& c, const EvcsFleet& f, const AttackScenario& s) {
    AttackRun run;
    run.slice = fleet_slice(f, s);
    const auto inj = apply_ev_load(base_injections(c), c, fleet_total(f, s.year), s.power_factor);
    run.pre_event = solve_power_flow(c, inj);
    SimulationConfig cfg;
    cfg.step_s = s.step_s;
    cfg.horizon_s = s.horizon_s;
    cfg.events = to_events(run.slice, s.t_attack_s, s.direction, s.power_factor);
    run.transient = simulate_transient(c, run.pre_event, cfg);
    return run;
}

inline double peak_frequency(const GridCase& c, const EvcsFleet& f, const AttackScenario& s) {
    return run_attack(c, f, s).transient.peak_hz;
}

struct FeasibilityProbe {
    double fraction = 0.0;
    double mw = 0.0;
    double peak_hz = 0.0;
};

struct FeasibilityResult {
    bool feasible = false;
    double mw = 0.0;        // smallest manipulated power reaching the target
    double fraction = 0.0;  // of the matching fleet
    double fleet_mw = 0.0;  // matching fleet at fraction 1
    double target_hz = 0.0;
    std::vector<FeasibilityProbe> probes;
};

/// Bisection on the manipulated fraction for the smallest attack whose peak COI frequency
/// reaches target_hz, to within tol_mw.
inline FeasibilityResult min_attack_power(const GridCase& c, const EvcsFleet& f, const AttackScenario& tmpl,
                                          double target_hz, double tol_mw = 0.5) {
    if (!(tol_mw > 0.0)) throw std::invalid_argument("tolerance must be positive");
    FeasibilityResult out;
    out.target_hz = target_hz;
    AttackScenario s = tmpl;
    s.fraction = 1.0;
    out.fleet_mw = total_mw(fleet_slice(f, s));
    if (target_hz <= kNominalHz) {
        out.feasible = true;
        return out;
    }
    auto probe = [&](double fraction) {
        s.fraction = fraction;
        const double peak = peak_frequency(c, f, s);
        out.probes.push_back({fraction, fraction * out.fleet_mw, peak});
        return peak;
    };
    if (out.fleet_mw <= 0.0 || probe(1.0) < target_hz) return out;

    double lo = 0.0, hi = 1.0;
    while ((hi - lo) * out.fleet_mw > tol_mw) {
        const double mid = 0.5 * (lo + hi);
        (probe(mid) >= target_hz ? hi : lo) = mid;
    }
    out.feasible = true;
    out.fraction = hi;
    out.mw = hi * out.fleet_mw;
    return out;
}

struct SweepPoint {
    double year = 0.0;
    std::string scope;  // "all" or an operator name
    double mw = 0.0;
    double peak_hz = kNominalHz;
    double steady_hz = kNominalHz;
};

namespace detail {

inline SweepPoint sweep_point(const GridCase& c, const EvcsFleet& f, AttackScenario s, std::string scope) {
    SweepPoint p{s.year, scope, total_mw(fleet_slice(f, s)), kNominalHz, kNominalHz};
    if (p.mw <= 0.0) return p;
    const auto run = run_attack(c, f, s);
    const auto summary = extract_summary(run.transient);
    p.peak_hz = summary.peak_hz;
    p.steady_hz = summary.steady_hz;
    return p;
}

/// Runs independent points concurrently; results keep input order.
inline std::vector<SweepPoint> run_points(const GridCase& c, const EvcsFleet& f,
                                          const std::vector<std::pair<AttackScenario, std::string>>& jobs) {
    std::vector<std::future<SweepPoint>> futures;
    futures.reserve(jobs.size());
    for (const auto& [s, scope] : jobs)
        futures.push_back(std::async(std::launch::async, [&c, &f, s = s, scope = scope] { return sweep_point(c, f, s, scope); }));
    std::vector<SweepPoint> out;
    out.reserve(jobs.size());
    for (auto& fut : futures) out.push_back(fut.get());
    return out;
}

}  // namespace detail

/// Full-fraction attack on each operator's network separately.
inline std::vector<SweepPoint> per_operator_sweep(const GridCase& c, const EvcsFleet& f, double year,
                                                  const AttackScenario& tmpl = {}) {
    std::vector<std::pair<AttackScenario, std::string>> jobs;
    for (const auto& op : f.operators()) {
        AttackScenario s = tmpl;
        s.year = year;
        s.operators = {op};
        s.exclude_operators.clear();
        s.fraction = 1.0;
        jobs.emplace_back(s, op);
    }
    return detail::run_points(c, f, jobs);
}

/// Full-fraction attacks for each scope ("all" or an operator) at each year.
inline std::vector<SweepPoint> year_sweep(const GridCase& c, const EvcsFleet& f, const std::vector<std::string>& scopes,
                                          const std::vector<double>& years, const AttackScenario& tmpl = {}) {
    std::vector<std::pair<AttackScenario, std::string>> jobs;
    for (double y : years)
        for (const auto& scope : scopes) {
            AttackScenario s = tmpl;
            s.year = y;
            s.operators = {scope};
            s.exclude_operators.clear();
            s.fraction = 1.0;
            jobs.emplace_back(s, scope);
        }
    return detail::run_points(c, f, jobs);
}

// ---------------------------------------------------------------------------
// Scenario file

inline AttackScenario parse_scenario(std::string_view content, const std::string& source = "<memory>") {
    const auto doc = text::parse(content, source);
    for (const auto& section : doc.sections)
        if (section.name != "scenario" && section.name != "relays")
            throw ParseError(source, section.number, "unknown section [" + section.name + "]");
    const auto* sec = doc.find("scenario");
    if (!sec) throw ParseError(source, 0, "missing [scenario] section");
    const text::KeyValues kv(*sec, source);
    static const std::set<std::string> known{"year", "operators", "exclude_operators", "buses", "fraction", "t_attack_s",
                                             "direction", "power_factor", "horizon_s", "step_s"};
    for (const auto& k : kv.keys())
        if (!known.count(k)) throw ParseError(source, kv.line_of(k), "unknown [scenario] key '" + k + "'");

    AttackScenario s;
    if (auto v = kv.number("year")) s.year = *v;
    if (auto v = kv.get("operators")) {
        s.operators = text::split_list(*v);
        if (s.operators.size() == 1 && detail::same_name(s.operators[0], "all")) s.operators.clear();
    }
    if (auto v = kv.get("exclude_operators")) s.exclude_operators = text::split_list(*v);
    if (auto v = kv.get("buses"); v && !detail::same_name(*v, "all")) {
        for (const auto& item : text::split_list(*v)) {
            char* end = nullptr;
            const long b = std::strtol(item.c_str(), &end, 10);
            if (item.empty() || *end != '\0') throw ParseError(source, kv.line_of("buses"), "bad bus id '" + item + "'");
            s.buses.push_back(static_cast<int>(b));
        }
    }
    if (auto v = kv.number("fraction")) s.fraction = *v;
    if (auto v = kv.number("t_attack_s")) s.t_attack_s = *v;
    if (auto v = kv.get("direction")) {
        if (*v == "shutdown") s.direction = AttackDirection::shutdown;
        else if (*v == "surge") s.direction = AttackDirection::surge;
        else throw ParseError(source, kv.line_of("direction"), "direction must be 'shutdown' or 'surge'");
    }
    if (auto v = kv.number("power_factor")) s.power_factor = *v;
    if (auto v = kv.number("horizon_s")) s.horizon_s = *v;
    if (auto v = kv.number("step_s")) s.step_s = *v;

    if (const auto* rel = doc.find("relays")) {
        const text::KeyValues r(*rel, source);
        const std::map<std::string, double*> fields{{"of_na", &s.relays.of_na},
                                                    {"of_ieee1547", &s.relays.of_ieee1547},
                                                    {"uf", &s.relays.uf},
                                                    {"ov", &s.relays.ov},
                                                    {"uv", &s.relays.uv},
                                                    {"line_overload_pct", &s.relays.line_overload_pct},
                                                    {"overload_dwell", &s.relays.overload_dwell_s}};
        for (const auto& k : r.keys()) {
            const auto it = fields.find(k);
            if (it == fields.end()) throw ParseError(source, r.line_of(k), "unknown [relays] key '" + k + "'");
            *it->second = *r.number(k);
        }
    }
    return s;
}

inline AttackScenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

}  // namespace evgrid
