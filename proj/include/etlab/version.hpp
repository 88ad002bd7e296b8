#pragma once

#include <string_view>

namespace etlab {

inline constexpr std::string_view kToolVersion = "etlab 0.1.0";

}  // namespace etlab
