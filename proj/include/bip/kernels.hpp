#pragma once

#include <cstddef>

namespace bip::kernels {

// Vector primitives used by the dense algebra and the diagonal fast paths.
// Two implementations exist: a scalar reference and an AVX2+FMA variant.
// A backend is picked once at runtime; tests pin backends explicitly to
// verify equivalence. Results may differ between backends by summation
// order only (bounded relative error), never semantically.
struct Backend {
    const char* name;
    double (*dot)(const double* x, const double* y, std::size_t n);
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    void (*scal)(double a, double* x, std::size_t n);
    void (*mul)(const double* w, const double* x, double* out, std::size_t n);
    double (*wsumsq)(const double* w, const double* x, std::size_t n);
    void (*rot)(double* x, double* y, double c, double s, std::size_t n);
};

const Backend& scalar();

// nullptr when the CPU (or the build) lacks AVX2+FMA.
const Backend* avx2();

// Runtime-selected backend: AVX2 when available unless BIP_FORCE_SCALAR=1.
const Backend& active();

// Test hook: pin a specific backend; nullptr restores automatic selection.
void force(const Backend* b);

inline double dot(const double* x, const double* y, std::size_t n) {
    return active().dot(x, y, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
    active().axpy(a, x, y, n);
}
inline void scal(double a, double* x, std::size_t n) {
    active().scal(a, x, n);
}
inline void mul(const double* w, const double* x, double* out, std::size_t n) {
    active().mul(w, x, out, n);
}
inline double wsumsq(const double* w, const double* x, std::size_t n) {
    return active().wsumsq(w, x, n);
}
inline void rot(double* x, double* y, double c, double s, std::size_t n) {
    active().rot(x, y, c, s, n);
}

}  // namespace bip::kernels
