#include "fedmkg/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "fedmkg/errors.hpp"

namespace fedmkg::kern {

namespace detail {

void add_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(std::size_t n, double a, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace detail

namespace {

struct OpsTable {
    void (*add)(std::size_t, const double*, const double*, double*);
    void (*sub)(std::size_t, const double*, const double*, double*);
    void (*mul)(std::size_t, const double*, const double*, double*);
    void (*scale)(std::size_t, double, const double*, double*);
    void (*axpy)(std::size_t, double, const double*, double*);
    double (*dot)(std::size_t, const double*, const double*);
};

constexpr OpsTable kScalarOps{detail::add_scalar, detail::sub_scalar,
                              detail::mul_scalar, detail::scale_scalar,
                              detail::axpy_scalar, detail::dot_scalar};

#if defined(FEDMKG_HAVE_AVX2_TU)
constexpr OpsTable kAvx2Ops{detail::add_avx2, detail::sub_avx2,
                            detail::mul_avx2, detail::scale_avx2,
                            detail::axpy_avx2, detail::dot_avx2};
#endif
#if defined(FEDMKG_HAVE_NEON_TU)
constexpr OpsTable kNeonOps{detail::add_neon, detail::sub_neon,
                            detail::mul_neon, detail::scale_neon,
                            detail::axpy_neon, detail::dot_neon};
#endif

OpsTable g_ops = kScalarOps;
Backend g_backend = Backend::Scalar;

struct AutoInit {
    AutoInit() { select_default_backend(); }
};
AutoInit g_auto_init;

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "unknown";
}

bool backend_available(Backend b) {
    switch (b) {
        case Backend::Scalar:
            return true;
        case Backend::Avx2:
#if defined(FEDMKG_HAVE_AVX2_TU)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(FEDMKG_HAVE_NEON_TU)
            return true;  // NEON is baseline on aarch64
#else
            return false;
#endif
    }
    return false;
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
    if (!backend_available(b)) {
        throw ConfigError(std::string("kernel backend not available: ") +
                          backend_name(b));
    }
    switch (b) {
        case Backend::Scalar:
            g_ops = kScalarOps;
            break;
        case Backend::Avx2:
#if defined(FEDMKG_HAVE_AVX2_TU)
            g_ops = kAvx2Ops;
#endif
            break;
        case Backend::Neon:
#if defined(FEDMKG_HAVE_NEON_TU)
            g_ops = kNeonOps;
#endif
            break;
    }
    g_backend = b;
}

void select_default_backend() {
    if (const char* env = std::getenv("FEDMKG_KERNELS")) {
        std::string want(env);
        if (want == "scalar") {
            set_backend(Backend::Scalar);
            return;
        }
        if (want == "avx2") {
            set_backend(Backend::Avx2);
            return;
        }
        if (want == "neon") {
            set_backend(Backend::Neon);
            return;
        }
        // Unknown value: fall through to auto-selection.
    }
    if (backend_available(Backend::Avx2)) {
        set_backend(Backend::Avx2);
    } else if (backend_available(Backend::Neon)) {
        set_backend(Backend::Neon);
    } else {
        set_backend(Backend::Scalar);
    }
}

void add(std::size_t n, const double* a, const double* b, double* out) {
    g_ops.add(n, a, b, out);
}
void sub(std::size_t n, const double* a, const double* b, double* out) {
    g_ops.sub(n, a, b, out);
}
void mul(std::size_t n, const double* a, const double* b, double* out) {
    g_ops.mul(n, a, b, out);
}
void scale(std::size_t n, double a, const double* x, double* out) {
    g_ops.scale(n, a, x, out);
}
void axpy(std::size_t n, double a, const double* x, double* y) {
    g_ops.axpy(n, a, x, y);
}
double dot(std::size_t n, const double* x, const double* y) {
    return g_ops.dot(n, x, y);
}

}  // namespace fedmkg::kern
