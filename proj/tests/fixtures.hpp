#pragma once

#include <string>

#include "evgrid/attack.hpp"

namespace fixtures {

inline std::string dataset(const std::string& name) { return std::string(EVGRID_DATASET_DIR) + "/" + name; }

inline const evgrid::GridCase& manhattan() {
    static const auto c = evgrid::load_grid_case(dataset("grid.txt"));
    return c;
}

inline const evgrid::EvcsFleet& fleet() {
    static const auto f = evgrid::load_fleet(dataset("fleet.txt"));
    return f;
}

/// Two buses joined by one branch: generator (slack) at bus 1, load at bus 2.
inline evgrid::GridCase two_bus(double r = 0.01, double x = 0.1, double load_p = 50.0, double load_q = 20.0) {
    return evgrid::parse_grid_case("[bus]\n"
                                   "id name nominal_kv kind base_load_p base_load_q\n"
                                   "1 gen 138 slack 0 0\n"
                                   "2 load 138 pq " + std::to_string(load_p) + " " + std::to_string(load_q) + "\n"
                                   "[branch]\n"
                                   "from_bus to_bus r x rating kind side_voltages\n"
                                   "1 2 " + std::to_string(r) + " " + std::to_string(x) + " 200 line 138/138\n"
                                   "[generator]\n"
                                   "bus p_set capacity inertia_h droop_r governor_tc damping_d xd_transient\n"
                                   "1 0 100 5 0.05 0.5 0 0.2\n");
}

inline evgrid::AttackScenario scenario(double year, std::vector<std::string> ops, double fraction = 1.0) {
    evgrid::AttackScenario s;
    s.year = year;
    s.operators = std::move(ops);
    s.fraction = fraction;
    return s;
}

}  // namespace fixtures
