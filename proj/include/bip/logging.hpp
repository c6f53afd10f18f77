#pragma once

#include <functional>
#include <string>

namespace bip::logging {

using Handler = std::function<void(const std::string&)>;

// Replaces the warning sink; an empty handler restores the stderr default.
void set_warning_handler(Handler h);
void warn(const std::string& msg);

}  // namespace bip::logging
