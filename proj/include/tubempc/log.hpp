#pragma once

#include <string_view>

namespace tubempc::log {

enum class Level { kQuiet, kWarning, kInfo };

void set_level(Level level);
Level level();

void warn(std::string_view message);
void info(std::string_view message);

}  // namespace tubempc::log
