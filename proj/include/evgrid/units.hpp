#pragma once

#include <stdexcept>

namespace evgrid {

inline constexpr double kSystemBaseMva = 100.0;
inline constexpr double kNominalHz = 60.0;

inline double to_per_unit(double value, double base_mva = kSystemBaseMva) {
    if (!(base_mva > 0.0)) throw std::invalid_argument("per-unit base must be positive");
    return value / base_mva;
}

inline double from_per_unit(double value_pu, double base_mva = kSystemBaseMva) {
    if (!(base_mva > 0.0)) throw std::invalid_argument("per-unit base must be positive");
    return value_pu * base_mva;
}

}  // namespace evgrid
