#pragma once

namespace mcad {
inline constexpr const char* kVersion = "0.1.0";
}
