#include "bip/logging.hpp"

#include <cstdio>
#include <mutex>
#include <utility>

namespace bip::logging {

namespace {
std::mutex mu;
Handler handler;
}  // namespace

void set_warning_handler(Handler h) {
    std::lock_guard lock(mu);
    handler = std::move(h);
}

void warn(const std::string& msg) {
    Handler h;
    {
        std::lock_guard lock(mu);
        h = handler;
    }
    if (h)
        h(msg);
    else
        std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace bip::logging
