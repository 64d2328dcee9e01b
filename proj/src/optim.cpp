#include "fedmkg/optim.hpp"

#include <cmath>

#include "fedmkg/errors.hpp"

namespace fedmkg {

void adam_step(Param& p, const AdamConfig& cfg) {
    p.step_count += 1;
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(p.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(p.step_count));
    const std::size_t n = p.value.count();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = p.grad.data[i];
        double& m = p.adam_m.data[i];
        double& v = p.adam_v.data[i];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        if (cfg.eps == 0.0) {
            if (v_hat == 0.0) continue;
            p.value.data[i] -= cfg.lr * m_hat / std::sqrt(v_hat);
        } else {
            p.value.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

double grad_check(const std::function<double(bool)>& loss_fn, Param& p,
                  double h) {
    p.zero_grad();
    const double base = loss_fn(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
    const Matrix analytic = p.grad;

    double max_rel = 0.0;
    const std::size_t n = p.value.count();
    for (std::size_t i = 0; i < n; ++i) {
        const double orig = p.value.data[i];
        p.value.data[i] = orig + h;
        const double lp = loss_fn(false);
        p.value.data[i] = orig - h;
        const double lm = loss_fn(false);
        p.value.data[i] = orig;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw NumericError("grad_check: non-finite loss at perturbation");
        const double numeric = (lp - lm) / (2.0 * h);
        const double a = analytic.data[i];
        const double denom =
            std::max(std::max(std::fabs(a), std::fabs(numeric)), 1e-8);
        max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
    return max_rel;
}

}  // namespace fedmkg
