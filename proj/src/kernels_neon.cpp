// NEON variants of the fp64 kernels (aarch64 only; NEON is baseline there).

#include <arm_neon.h>

#include <cstddef>

#include "fedmkg/kernels.hpp"

namespace fedmkg::kern::detail {

void add_neon(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(std::size_t n, double a, const double* x, double* out) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_neon(std::size_t n, double a, const double* x, double* y) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float64x2_t y0 = vld1q_f64(y + i);
        float64x2_t y1 = vld1q_f64(y + i + 2);
        y0 = vfmaq_f64(y0, va, vld1q_f64(x + i));
        y1 = vfmaq_f64(y1, va, vld1q_f64(x + i + 2));
        vst1q_f64(y + i, y0);
        vst1q_f64(y + i + 2, y1);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_neon(std::size_t n, const double* x, const double* y) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace fedmkg::kern::detail
