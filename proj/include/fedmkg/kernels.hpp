#pragma once

#include <cstddef>

// Low-level fp64 array kernels behind all Matrix arithmetic. Each operation
// has a scalar reference implementation plus SIMD variants (AVX2 on x86-64,
// NEON on aarch64) selected once at startup and overridable at runtime.
// SIMD reductions may reassociate, so dot/gemm results agree with the scalar
// reference only up to rounding; elementwise kernels agree except for FMA
// contraction. Equivalence is pinned by tests/test_kernels.cpp.

namespace fedmkg::kern {

enum class Backend { Scalar, Avx2, Neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();

// Throws ConfigError if the backend is not compiled in or not supported by
// the running CPU.
void set_backend(Backend b);

// Widest available backend, unless the FEDMKG_KERNELS environment variable
// ("scalar" | "avx2" | "neon") picks one explicitly.
void select_default_backend();

void add(std::size_t n, const double* a, const double* b, double* out);
void sub(std::size_t n, const double* a, const double* b, double* out);
void mul(std::size_t n, const double* a, const double* b, double* out);
void scale(std::size_t n, double a, const double* x, double* out);
// y[i] += a * x[i]
void axpy(std::size_t n, double a, const double* x, double* y);
double dot(std::size_t n, const double* x, const double* y);

namespace detail {

// Reference kernels, always present; SIMD variants exist only on their
// architecture. Exposed so the equivalence tests can call both sides.
void add_scalar(std::size_t n, const double* a, const double* b, double* out);
void sub_scalar(std::size_t n, const double* a, const double* b, double* out);
void mul_scalar(std::size_t n, const double* a, const double* b, double* out);
void scale_scalar(std::size_t n, double a, const double* x, double* out);
void axpy_scalar(std::size_t n, double a, const double* x, double* y);
double dot_scalar(std::size_t n, const double* x, const double* y);

#if defined(__x86_64__) || defined(_M_X64)
void add_avx2(std::size_t n, const double* a, const double* b, double* out);
void sub_avx2(std::size_t n, const double* a, const double* b, double* out);
void mul_avx2(std::size_t n, const double* a, const double* b, double* out);
void scale_avx2(std::size_t n, double a, const double* x, double* out);
void axpy_avx2(std::size_t n, double a, const double* x, double* y);
double dot_avx2(std::size_t n, const double* x, const double* y);
#endif

#if defined(__aarch64__)
void add_neon(std::size_t n, const double* a, const double* b, double* out);
void sub_neon(std::size_t n, const double* a, const double* b, double* out);
void mul_neon(std::size_t n, const double* a, const double* b, double* out);
void scale_neon(std::size_t n, double a, const double* x, double* out);
void axpy_neon(std::size_t n, double a, const double* x, double* y);
double dot_neon(std::size_t n, const double* x, const double* y);
#endif

}  // namespace detail

}  // namespace fedmkg::kern
