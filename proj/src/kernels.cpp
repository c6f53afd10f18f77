#include "bip/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace bip::kernels {

#ifndef BIP_BUILD_AVX2
const Backend* avx2() { return nullptr; }
#endif

namespace {

const Backend* auto_select() {
    if (const char* env = std::getenv("BIP_FORCE_SCALAR"); env && env[0] == '1')
        return &scalar();
    if (const Backend* v = avx2()) return v;
    return &scalar();
}

std::atomic<const Backend*> forced{nullptr};

}  // namespace

const Backend& active() {
    if (const Backend* f = forced.load(std::memory_order_relaxed)) return *f;
    static const Backend* selected = auto_select();
    return *selected;
}

void force(const Backend* b) { forced.store(b, std::memory_order_relaxed); }

}  // namespace bip::kernels
