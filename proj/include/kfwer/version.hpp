#pragma once

#define KFWER_VERSION_STRING "0.1.0"

namespace kfwer {

inline constexpr const char* version = KFWER_VERSION_STRING;

}  // namespace kfwer
