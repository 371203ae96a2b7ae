#pragma once

namespace tse {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace tse
