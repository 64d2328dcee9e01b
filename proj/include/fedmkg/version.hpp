#pragma once

namespace fedmkg {
inline constexpr const char* kVersion = "0.1.0";
}
