#pragma once

namespace cmzsl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cmzsl
