#pragma once

namespace qlf {
inline constexpr const char* kVersion = "0.1.0";
}
