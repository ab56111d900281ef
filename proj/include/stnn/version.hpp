#pragma once

namespace stnn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stnn
