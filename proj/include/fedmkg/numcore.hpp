#pragma once

// Scalar convenience forms of the loss primitives. The differentiable
// versions live on the Tape (softmax_xent_rows / kl_logits_rows); these are
// the single-vector entry points used directly by evaluation code and tests.

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedmkg/errors.hpp"

namespace fedmkg {

// -log softmax(logits)[target], max-subtracted for stability.
inline double softmax_xent(const std::vector<double>& logits,
                           std::size_t target) {
    if (logits.empty()) throw DimensionError("softmax_xent: empty logits");
    if (target >= logits.size())
        throw IndexError("softmax_xent: target index out of range");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return std::log(z) - (logits[target] - mx);
}

// KL(softmax(teacher) || softmax(student)).
inline double kl_div(const std::vector<double>& teacher,
                     const std::vector<double>& student) {
    if (teacher.size() != student.size())
        throw DimensionError("kl_div: length mismatch");
    if (teacher.empty()) throw DimensionError("kl_div: empty logits");
    auto log_softmax = [](const std::vector<double>& l) {
        double mx = l[0];
        for (double v : l) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : l) z += std::exp(v - mx);
        const double lz = std::log(z);
        std::vector<double> out(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) out[i] = l[i] - mx - lz;
        return out;
    };
    const auto lp = log_softmax(teacher);
    const auto lq = log_softmax(student);
    double kl = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i)
        kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    return kl;
}

}  // namespace fedmkg
