#pragma once

namespace milpdl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace milpdl
