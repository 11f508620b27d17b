#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "evgrid/dynamics.hpp"
#include "evgrid/grid.hpp"

namespace evgrid {

struct RelaySettings {
    double of_na = 61.2;         // Hz, North American practice
    double of_ieee1547 = 62.0;   // Hz
    double uf = 58.8;            // Hz
    double ov = 1.1;             // p.u.
    double uv = 0.9;             // p.u.
    double line_overload_pct = 100.0;
    double overload_dwell_s = 0.0;  // 0 = instantaneous pickup

    void validate() const {
        if (!(of_na > kNominalHz && of_ieee1547 > kNominalHz && uf < kNominalHz))
            throw std::invalid_argument("relay settings need over-frequency thresholds above 60 Hz and under-frequency below");
        if (!(ov > 1.0 && uv < 1.0)) throw std::invalid_argument("relay settings need ov > 1 > uv");
        if (!(line_overload_pct > 0.0)) throw std::invalid_argument("line overload threshold must be positive");
        if (overload_dwell_s < 0.0) throw std::invalid_argument("dwell must be non-negative");
    }
};

enum class RelayKind { over_freq_na, over_freq_ieee, under_freq, over_volt, under_volt, line_overload };

inline const char* to_string(RelayKind k) {
    switch (k) {
        case RelayKind::over_freq_na: return "over_freq_na";
        case RelayKind::over_freq_ieee: return "over_freq_ieee";
        case RelayKind::under_freq: return "under_freq";
        case RelayKind::over_volt: return "over_volt";
        case RelayKind::under_volt: return "under_volt";
        case RelayKind::line_overload: return "line_overload";
    }
    return "?";
}

inline bool is_frequency_relay(RelayKind k) {
    return k == RelayKind::over_freq_na || k == RelayKind::over_freq_ieee || k == RelayKind::under_freq;
}

/// `element` is a 0-based index: generator for frequency relays, bus for voltage relays,
/// branch for overload relays.
struct RelayEvent {
    double time_s = 0.0;
    RelayKind kind = RelayKind::over_freq_na;
    std::size_t element = 0;
    std::string element_label;
    double value = 0.0;

    bool operator==(const RelayEvent&) const = default;
};

namespace detail {

/// First instant at which `violates` has held for `dwell` seconds; -1 if never.
template <typename Pred>
long first_trip(const std::vector<double>& time, const std::vector<double>& trace, double dwell, Pred violates) {
    long start = -1;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        if (!violates(trace[k])) {
            start = -1;
            continue;
        }
        if (start < 0) start = static_cast<long>(k);
        if (time[k] - time[static_cast<std::size_t>(start)] >= dwell - 1e-12) return static_cast<long>(k);
    }
    return -1;
}

inline void sort_events(std::vector<RelayEvent>& events) {
    std::stable_sort(events.begin(), events.end(), [](const RelayEvent& a, const RelayEvent& b) {
        return std::tie(a.time_s, a.kind, a.element) < std::tie(b.time_s, b.kind, b.element);
    });
}

}  // namespace detail

/// One event per (element, kind) at its first violation. Frequency relays watch the COI frequency.
inline std::vector<RelayEvent> scan_relays(const TransientResult& r, const RelaySettings& s) {
    s.validate();
    std::vector<RelayEvent> events;
    const auto& t = r.time_s;
    auto add = [&](long k, RelayKind kind, std::size_t element, std::string label, const std::vector<double>& trace) {
        if (k >= 0) events.push_back({t[static_cast<std::size_t>(k)], kind, element, std::move(label), trace[static_cast<std::size_t>(k)]});
    };

    const long of_na = detail::first_trip(t, r.coi_hz, s.overload_dwell_s, [&](double f) { return f >= s.of_na; });
    const long of_ieee = detail::first_trip(t, r.coi_hz, s.overload_dwell_s, [&](double f) { return f >= s.of_ieee1547; });
    const long uf = detail::first_trip(t, r.coi_hz, s.overload_dwell_s, [&](double f) { return f <= s.uf; });
    for (std::size_t g = 0; g < r.generator_bus.size(); ++g) {
        const auto label = "G" + std::to_string(g + 1) + "@bus" + std::to_string(r.generator_bus[g]);
        add(of_na, RelayKind::over_freq_na, g, label, r.coi_hz);
        add(of_ieee, RelayKind::over_freq_ieee, g, label, r.coi_hz);
        add(uf, RelayKind::under_freq, g, label, r.coi_hz);
    }
    for (std::size_t i = 0; i < r.bus_voltage_pu.size(); ++i) {
        const auto label = "bus" + std::to_string(i < r.bus_id.size() ? r.bus_id[i] : static_cast<int>(i + 1));
        const auto& v = r.bus_voltage_pu[i];
        add(detail::first_trip(t, v, s.overload_dwell_s, [&](double x) { return x > s.ov; }), RelayKind::over_volt, i, label, v);
        add(detail::first_trip(t, v, s.overload_dwell_s, [&](double x) { return x < s.uv; }), RelayKind::under_volt, i, label, v);
    }
    for (std::size_t k = 0; k < r.branch_loading.size(); ++k) {
        const auto& l = r.branch_loading[k];
        add(detail::first_trip(t, l, s.overload_dwell_s, [&](double x) { return x > s.line_overload_pct; }),
            RelayKind::line_overload, k, k < r.branch_label.size() ? r.branch_label[k] : std::to_string(k), l);
    }
    detail::sort_events(events);
    return events;
}

/// Overload events from a steady-state loading vector (time 0).
inline std::vector<RelayEvent> scan_static_overloads(const std::vector<double>& loadings, const RelaySettings& s,
                                                     const GridCase* c = nullptr) {
    std::vector<RelayEvent> events;
    for (std::size_t k = 0; k < loadings.size(); ++k) {
        if (loadings[k] > s.line_overload_pct)
            events.push_back({0.0, RelayKind::line_overload, k, c ? c->branches.at(k).label() : std::to_string(k), loadings[k]});
    }
    return events;
}

enum class BlackoutVerdict { none, partial, system_wide };

inline const char* to_string(BlackoutVerdict v) {
    switch (v) {
        case BlackoutVerdict::none: return "none";
        case BlackoutVerdict::partial: return "partial";
        case BlackoutVerdict::system_wide: return "system_wide";
    }
    return "?";
}

/// Generators with a frequency trip are disconnected, overloaded branches are opened, and
/// every loaded bus must still reach a connected generator.
inline BlackoutVerdict blackout_verdict(const std::vector<RelayEvent>& events, const GridCase& c) {
    const auto ng = c.generators.size();
    std::vector<bool> gen_tripped(ng, false), branch_open(c.branches.size(), false);
    for (const auto& e : events) {
        if (is_frequency_relay(e.kind) && e.element < ng) gen_tripped[e.element] = true;
        if (e.kind == RelayKind::line_overload && e.element < branch_open.size()) branch_open[e.element] = true;
    }
    const auto tripped = static_cast<std::size_t>(std::count(gen_tripped.begin(), gen_tripped.end(), true));
    if (ng > 0 && tripped == ng) return BlackoutVerdict::system_wide;

    const auto labels = detail::component_labels(c.bus_count(), c.branches, branch_open);
    std::vector<bool> energized(c.bus_count(), false);
    for (std::size_t g = 0; g < ng; ++g) {
        if (gen_tripped[g]) continue;
        const int island = labels[c.index_of(c.generators[g].bus)];
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == island) energized[i] = true;
    }
    std::size_t loads = 0, served = 0;
    for (const auto& b : c.buses) {
        if (b.base_load_p <= 0.0 && b.base_load_q == 0.0) continue;
        ++loads;
        if (energized[c.index_of(b.id)]) ++served;
    }
    if (loads > 0 && served == 0) return BlackoutVerdict::system_wide;
    if (tripped > 0 || served < loads) return BlackoutVerdict::partial;
    return BlackoutVerdict::none;
}

}  // namespace evgrid
