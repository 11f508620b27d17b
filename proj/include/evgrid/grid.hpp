#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "evgrid/error.hpp"
#include "evgrid/text_format.hpp"
#include "evgrid/units.hpp"

namespace evgrid {

using Complex = std::complex<double>;

enum class BusKind { slack, pv, pq };
enum class BranchKind { line, transformer };

/// How the power flow shares the system power imbalance between generators.
enum class SlackDistribution {
    single,    ///< the slack bus absorbs everything
    governor,  ///< every generator picks up in proportion to capacity / droop_r
};

inline const char* to_string(BusKind k) {
    switch (k) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        case BusKind::pq: return "pq";
    }
    return "?";
}

inline const char* to_string(BranchKind k) { return k == BranchKind::line ? "line" : "transformer"; }
inline const char* to_string(SlackDistribution d) { return d == SlackDistribution::single ? "single" : "governor"; }

struct Bus {
    int id = 0;
    std::string name;
    double nominal_kv = 0.0;
    BusKind kind = BusKind::pq;
    double base_load_p = 0.0;  // MW
    double base_load_q = 0.0;  // Mvar
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;       // p.u. on system base
    double x = 0.0;       // p.u. on system base
    double rating = 0.0;  // MVA
    BranchKind kind = BranchKind::line;
    double from_kv = 0.0;
    double to_kv = 0.0;

    Complex impedance() const { return {r, x}; }
    Complex admittance() const { return 1.0 / impedance(); }
    std::string label() const { return std::to_string(from_bus) + "-" + std::to_string(to_bus); }
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;         // MW
    double capacity = 0.0;      // MVA, machine base
    double inertia_h = 0.0;     // s, machine base
    double droop_r = 0.0;       // p.u. speed / p.u. power, machine base
    double governor_tc = 0.0;   // s
    double damping_d = 0.0;     // p.u. power / p.u. speed, machine base
    double xd_transient = 0.0;  // p.u., machine base

    /// Frequency-response gain on the system base (p.u. power per p.u. speed).
    double droop_gain(double base_mva = kSystemBaseMva) const { return capacity / base_mva / droop_r; }
};

/// Static network description. Buses are stored sorted by id, so bus id k lives at index k-1.
struct GridCase {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    double base_mva = kSystemBaseMva;
    SlackDistribution slack_distribution = SlackDistribution::single;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t index_of(int bus_id) const { return static_cast<std::size_t>(bus_id - 1); }
    const Bus& bus(int bus_id) const { return buses.at(index_of(bus_id)); }
    bool has_bus(int bus_id) const { return bus_id >= 1 && bus_id <= static_cast<int>(buses.size()); }

    int slack_bus() const {
        for (const auto& b : buses)
            if (b.kind == BusKind::slack) return b.id;
        return 0;
    }

    double total_base_load() const {
        return std::accumulate(buses.begin(), buses.end(), 0.0, [](double s, const Bus& b) { return s + b.base_load_p; });
    }

    std::size_t branch_index(int from, int to) const {
        for (std::size_t k = 0; k < branches.size(); ++k) {
            const auto& br = branches[k];
            if ((br.from_bus == from && br.to_bus == to) || (br.from_bus == to && br.to_bus == from)) return k;
        }
        throw ValidationError("no branch " + std::to_string(from) + "-" + std::to_string(to));
    }
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

/// Union-find style connectivity over the bus set, skipping branches flagged in `removed`.
inline std::vector<int> component_labels(std::size_t n, const std::vector<Branch>& branches,
                                         const std::vector<bool>& removed = {}) {
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (std::size_t k = 0; k < branches.size(); ++k) {
        if (!removed.empty() && removed[k]) continue;
        const int a = find(branches[k].from_bus - 1);
        const int b = find(branches[k].to_bus - 1);
        if (a != b) parent[a] = b;
    }
    std::vector<int> label(n);
    for (std::size_t v = 0; v < n; ++v) label[v] = find(static_cast<int>(v));
    return label;
}

}  // namespace detail

/// Checks every GridCase invariant, throwing ValidationError naming the offending record.
inline void validate(const GridCase& c) {
    if (c.buses.empty()) throw ValidationError("case has no buses");
    if (!(c.base_mva > 0.0)) throw ValidationError("base_mva must be positive");

    std::vector<int> slack;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        const auto& b = c.buses[i];
        if (b.id != static_cast<int>(i) + 1)
            throw ValidationError("bus ids must be unique and contiguous from 1 (found id " + std::to_string(b.id) +
                                  " at position " + std::to_string(i + 1) + ")");
        if (!(b.nominal_kv > 0.0)) throw ValidationError("bus " + std::to_string(b.id) + ": nominal_kv must be positive");
        if (b.base_load_p < 0.0) throw ValidationError("bus " + std::to_string(b.id) + ": base_load_p must be non-negative");
        if (b.kind == BusKind::slack) slack.push_back(b.id);
    }
    if (slack.empty()) throw ValidationError("case has no slack bus");
    if (slack.size() > 1) {
        std::string ids;
        for (int id : slack) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        throw ValidationError("case has " + std::to_string(slack.size()) + " slack buses: " + ids);
    }

    for (const auto& br : c.branches) {
        const auto tag = "branch " + br.label();
        if (!c.has_bus(br.from_bus) || !c.has_bus(br.to_bus)) throw ValidationError(tag + ": unknown bus");
        if (br.from_bus == br.to_bus) throw ValidationError(tag + ": from_bus equals to_bus");
        if (br.x == 0.0) throw ValidationError(tag + ": zero reactance");
        if (br.r < 0.0) throw ValidationError(tag + ": negative resistance");
        if (!(br.rating > 0.0)) throw ValidationError(tag + ": rating must be positive");
    }

    std::vector<int> gen_count(c.buses.size(), 0);
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        const auto tag = "generator " + std::to_string(g + 1) + " at bus " + std::to_string(gen.bus);
        if (!c.has_bus(gen.bus)) throw ValidationError(tag + ": unknown bus");
        if (c.bus(gen.bus).kind == BusKind::pq) throw ValidationError(tag + ": generator on a pq bus");
        if (!(gen.capacity > 0.0)) throw ValidationError(tag + ": capacity must be positive");
        if (!(gen.inertia_h > 0.0)) throw ValidationError(tag + ": inertia_h must be positive");
        if (!(gen.droop_r > 0.0)) throw ValidationError(tag + ": droop_r must be positive");
        if (!(gen.governor_tc > 0.0)) throw ValidationError(tag + ": governor_tc must be positive");
        if (!(gen.xd_transient > 0.0)) throw ValidationError(tag + ": xd_transient must be positive");
        if (gen.damping_d < 0.0) throw ValidationError(tag + ": damping_d must be non-negative");
        if (gen.p_set < 0.0 || gen.p_set > gen.capacity) throw ValidationError(tag + ": p_set outside [0, capacity]");
        ++gen_count[c.index_of(gen.bus)];
    }
    for (const auto& b : c.buses)
        if (b.kind != BusKind::pq && gen_count[c.index_of(b.id)] == 0)
            throw ValidationError("bus " + std::to_string(b.id) + ": " + to_string(b.kind) + " bus has no generator");

    const auto labels = detail::component_labels(c.buses.size(), c.branches);
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[0])
            throw ValidationError("network is disconnected: bus " + std::to_string(i + 1) + " is not reachable from bus 1");

    double slack_capacity = 0.0, other_dispatch = 0.0;
    for (const auto& gen : c.generators) {
        if (gen.bus == slack.front()) slack_capacity += gen.capacity;
        else other_dispatch += gen.p_set;
    }
    if (c.total_base_load() - other_dispatch > slack_capacity)
        throw ValidationError("base load exceeds non-slack dispatch plus slack-bus capacity");
}

/// True iff removing branch k disconnects the network.
inline bool is_bridge(const GridCase& c, std::size_t k) {
    std::vector<bool> removed(c.branches.size(), false);
    removed.at(k) = true;
    const auto labels = detail::component_labels(c.buses.size(), c.branches, removed);
    return std::any_of(labels.begin(), labels.end(), [&](int l) { return l != labels[0]; });
}

// ---------------------------------------------------------------------------
// Case file I/O

namespace detail {

inline BusKind parse_bus_kind(const std::string& s, const std::string& src, int line) {
    if (s == "slack") return BusKind::slack;
    if (s == "pv") return BusKind::pv;
    if (s == "pq") return BusKind::pq;
    throw ParseError(src, line, "unknown bus kind '" + s + "'");
}

inline std::pair<double, double> parse_side_voltages(const std::string& s, const std::string& src, int line) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw ParseError(src, line, "side_voltages must look like 'kV/kV', got '" + s + "'");
    char* e1 = nullptr;
    char* e2 = nullptr;
    const std::string a = s.substr(0, slash), b = s.substr(slash + 1);
    const double va = std::strtod(a.c_str(), &e1), vb = std::strtod(b.c_str(), &e2);
    if (a.empty() || b.empty() || *e1 != '\0' || *e2 != '\0')
        throw ParseError(src, line, "side_voltages must look like 'kV/kV', got '" + s + "'");
    return {va, vb};
}

/// Shortest decimal that round-trips the double exactly. Fixed notation unless the value is
/// tiny or huge.
inline std::string format_number(double v) {
    char buf[400];
    const double a = std::abs(v);
    const auto fmt = (a == 0.0 || (a >= 1e-6 && a < 1e15)) ? std::chars_format::fixed : std::chars_format::general;
    const auto res = std::to_chars(buf, buf + sizeof buf, v, fmt);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parses and validates a case file held in memory.
inline GridCase parse_grid_case(std::string_view content, const std::string& source = "<memory>") {
    const auto doc = text::parse(content, source);
    GridCase c;

    for (const auto& section : doc.sections) {
        if (section.name != "case" && section.name != "bus" && section.name != "branch" && section.name != "generator")
            throw ParseError(source, section.number, "unknown section [" + section.name + "]");
    }

    if (const auto* s = doc.find("case")) {
        const text::KeyValues kv(*s, source);
        for (const auto& key : kv.keys()) {
            if (key == "base_mva") {
                c.base_mva = *kv.number(key);
            } else if (key == "slack_distribution") {
                const auto v = *kv.get(key);
                if (v == "single") c.slack_distribution = SlackDistribution::single;
                else if (v == "governor") c.slack_distribution = SlackDistribution::governor;
                else throw ParseError(source, kv.line_of(key), "slack_distribution must be 'single' or 'governor'");
            } else {
                throw ParseError(source, kv.line_of(key), "unknown [case] key '" + key + "'");
            }
        }
    }

    const auto* bus_section = doc.find("bus");
    if (!bus_section) throw ParseError(source, 0, "missing [bus] section");
    {
        const text::Table t(*bus_section, source);
        t.require({"id", "name", "nominal_kv", "kind", "base_load_p", "base_load_q"});
        std::set<int> ids;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            Bus b;
            b.id = t.integer(r, "id");
            if (!ids.insert(b.id).second) throw ValidationError("duplicate bus id " + std::to_string(b.id) + " (line " + std::to_string(t.line_of(r)) + ")");
            b.name = t.str(r, "name");
            b.nominal_kv = t.num(r, "nominal_kv");
            b.kind = detail::parse_bus_kind(t.str(r, "kind"), source, t.line_of(r));
            b.base_load_p = t.num(r, "base_load_p");
            b.base_load_q = t.num(r, "base_load_q");
            c.buses.push_back(b);
        }
        std::sort(c.buses.begin(), c.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    }

    if (const auto* s = doc.find("branch")) {
        const text::Table t(*s, source);
        t.require({"from_bus", "to_bus", "r", "x", "rating", "kind", "side_voltages"});
        for (std::size_t r = 0; r < t.rows(); ++r) {
            Branch br;
            br.from_bus = t.integer(r, "from_bus");
            br.to_bus = t.integer(r, "to_bus");
            br.r = t.num(r, "r");
            br.x = t.num(r, "x");
            br.rating = t.num(r, "rating");
            const auto& kind = t.str(r, "kind");
            if (kind == "line") br.kind = BranchKind::line;
            else if (kind == "transformer") br.kind = BranchKind::transformer;
            else throw ParseError(source, t.line_of(r), "unknown branch kind '" + kind + "'");
            std::tie(br.from_kv, br.to_kv) = detail::parse_side_voltages(t.str(r, "side_voltages"), source, t.line_of(r));
            c.branches.push_back(br);
        }
    }

    if (const auto* s = doc.find("generator")) {
        const text::Table t(*s, source);
        t.require({"bus", "p_set", "capacity", "inertia_h", "droop_r", "governor_tc", "damping_d", "xd_transient"});
        for (std::size_t r = 0; r < t.rows(); ++r) {
            Generator g;
            g.bus = t.integer(r, "bus");
            g.p_set = t.num(r, "p_set");
            g.capacity = t.num(r, "capacity");
            g.inertia_h = t.num(r, "inertia_h");
            g.droop_r = t.num(r, "droop_r");
            g.governor_tc = t.num(r, "governor_tc");
            g.damping_d = t.num(r, "damping_d");
            g.xd_transient = t.num(r, "xd_transient");
            c.generators.push_back(g);
        }
    }

    validate(c);
    return c;
}

inline GridCase load_grid_case(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_grid_case(ss.str(), path);
}

/// Serializes a case in the format accepted by parse_grid_case. Numbers round-trip exactly.
inline std::string write_grid_case(const GridCase& c, const std::string& header_comment = {}) {
    using detail::format_number;
    std::ostringstream out;
    if (!header_comment.empty()) {
        std::istringstream lines(header_comment);
        for (std::string l; std::getline(lines, l);) out << "# " << l << "\n";
        out << "\n";
    }
    out << "[case]\nbase_mva = " << format_number(c.base_mva) << "\nslack_distribution = " << to_string(c.slack_distribution)
        << "\n\n[bus]\nid name nominal_kv kind base_load_p base_load_q\n";
    for (const auto& b : c.buses)
        out << b.id << ' ' << text::quote(b.name) << ' ' << format_number(b.nominal_kv) << ' ' << to_string(b.kind) << ' '
            << format_number(b.base_load_p) << ' ' << format_number(b.base_load_q) << "\n";
    out << "\n[branch]\nfrom_bus to_bus r x rating kind side_voltages\n";
    for (const auto& br : c.branches)
        out << br.from_bus << ' ' << br.to_bus << ' ' << format_number(br.r) << ' ' << format_number(br.x) << ' '
            << format_number(br.rating) << ' ' << to_string(br.kind) << ' ' << format_number(br.from_kv) << '/'
            << format_number(br.to_kv) << "\n";
    out << "\n[generator]\nbus p_set capacity inertia_h droop_r governor_tc damping_d xd_transient\n";
    for (const auto& g : c.generators)
        out << g.bus << ' ' << format_number(g.p_set) << ' ' << format_number(g.capacity) << ' ' << format_number(g.inertia_h)
            << ' ' << format_number(g.droop_r) << ' ' << format_number(g.governor_tc) << ' ' << format_number(g.damping_d) << ' '
            << format_number(g.xd_transient) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Admittance matrix

/// Nodal admittance matrix in per-unit on the system base. Public accessors take 1-based bus ids.
class AdmittanceMatrix {
public:
    using Sparse = Eigen::SparseMatrix<Complex>;

    AdmittanceMatrix() = default;
    explicit AdmittanceMatrix(Sparse m) : m_(std::move(m)) {}

    std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
    Complex at(int from_id, int to_id) const { return m_.coeff(from_id - 1, to_id - 1); }
    const Sparse& sparse() const { return m_; }
    Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(m_); }

private:
    Sparse m_;
};

/// Series-impedance branches only: Y[i][j] = -sum 1/(r+jx), diagonal = -(row sum of off-diagonals).
inline AdmittanceMatrix build_ybus(const GridCase& c) {
    const auto n = static_cast<Eigen::Index>(c.bus_count());
    std::map<std::pair<Eigen::Index, Eigen::Index>, Complex> acc;
    for (const auto& br : c.branches) {
        const auto i = static_cast<Eigen::Index>(c.index_of(br.from_bus));
        const auto j = static_cast<Eigen::Index>(c.index_of(br.to_bus));
        const Complex y = br.admittance();
        acc[{i, j}] -= y;
        acc[{j, i}] -= y;
    }
    std::vector<Complex> diag(static_cast<std::size_t>(n), Complex{});
    for (const auto& [ij, v] : acc) diag[static_cast<std::size_t>(ij.first)] -= v;

    std::vector<Eigen::Triplet<Complex>> triplets;
    for (const auto& [ij, v] : acc) triplets.emplace_back(ij.first, ij.second, v);
    for (Eigen::Index i = 0; i < n; ++i) triplets.emplace_back(i, i, diag[static_cast<std::size_t>(i)]);
    AdmittanceMatrix::Sparse m(n, n);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return AdmittanceMatrix(std::move(m));
}

}  // namespace evgrid
