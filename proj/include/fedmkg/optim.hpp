#pragma once

#include <functional>

#include "fedmkg/matrix.hpp"

namespace fedmkg {

// A trainable matrix plus its gradient accumulator and Adam state.
struct Param {
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    long step_count = 0;

    Param() = default;
    explicit Param(Matrix init)
        : value(std::move(init)),
          grad(value.rows, value.cols),
          adam_m(value.rows, value.cols),
          adam_v(value.rows, value.cols) {}

    void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    // eps = 0 switches to the pure m_hat/sqrt(v_hat) update (coordinates with
    // zero second moment are skipped), which is exactly invariant to scaling
    // the gradient by powers of two.
    double eps = 1e-8;
};

// Standard Adam with bias correction; increments p.step_count.
void adam_step(Param& p, const AdamConfig& cfg);

// Compares the analytic gradient of `loss_fn` w.r.t. `p` against central
// finite differences. loss_fn(true) must rebuild the loss, run backward, and
// leave the gradient in p.grad (p.grad is zeroed beforehand); loss_fn(false)
// must only return the loss value. loss_fn must be deterministic across
// calls (re-seed any internal randomness). Returns the max relative error
// with denominator max(|analytic|, |numeric|, 1e-8). Throws NumericError on
// a non-finite loss.
double grad_check(const std::function<double(bool with_grad)>& loss_fn,
                  Param& p, double h);

}  // namespace fedmkg
