#pragma once

#include <cstdint>
#include <string_view>

namespace oodrecon {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::uint16_t kWeightFormatVersion = 1;
inline constexpr std::uint16_t kRasterFormatVersion = 1;

}  // namespace oodrecon
