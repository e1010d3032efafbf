#pragma once

namespace qrlob {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace qrlob
