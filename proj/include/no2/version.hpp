#pragma once

namespace no2 {

inline constexpr const char* kToolName = "no2";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace no2
