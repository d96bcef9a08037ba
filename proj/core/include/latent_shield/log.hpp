#pragma once

#include <functional>
#include <string_view>

namespace lshield {

/// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(std::string_view)>;

void set_warning_sink(WarningSink sink);
void log_warning(std::string_view message);

}  // namespace lshield
