#pragma once

namespace nashcbo {

inline constexpr const char* kVersion = "1.0.0";

}
