#pragma once

#include <iostream>
#include <string>

namespace semu::log {

inline void warn(const std::string& msg) { std::cerr << "[semu] warning: " << msg << "\n"; }
inline void info(const std::string& msg) { std::cerr << "[semu] " << msg << "\n"; }

}  // namespace semu::log
