#pragma once

namespace dpnet {

inline constexpr const char* kToolVersion = "dpnet 0.1.0";

}  // namespace dpnet
