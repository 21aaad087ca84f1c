#pragma once

#include <string_view>

namespace latentsearch {

/// Recorded in every run manifest; matches the CMake project version.
inline constexpr std::string_view code_version = "0.1.0";

} // namespace latentsearch
