#pragma once

namespace evgrid {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace evgrid
