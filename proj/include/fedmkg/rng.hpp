#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fedmkg/matrix.hpp"

namespace fedmkg {

// Deterministic random stream: xoshiro256++ seeded via splitmix64. The same
// seed and call sequence produce the same values on every platform, which is
// what the reproducibility tests pin. All experiment randomness flows from
// one root seed through named fork()s, so e.g. the partition stream is
// independent of the training stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Child stream derived from this stream's seed and a name; independent of
    // how many values were already drawn from the parent.
    Rng fork(std::string_view name) const;

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    std::uint64_t uniform_int(std::uint64_t n);  // [0, n), unbiased; n >= 1
    bool bernoulli(double p);
    double normal();                        // N(0, 1)
    double gamma(double alpha);             // alpha > 0
    std::vector<double> dirichlet(double alpha, std::size_t k);

    void fill_normal(Matrix& m, double mean, double stddev);
    void fill_uniform(Matrix& m, double lo, double hi);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // k distinct values from [0, n) excluding `exclude`; k < n required.
    std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                        std::size_t k,
                                                        std::size_t exclude);

private:
    std::uint64_t seed_ = 0;
    std::uint64_t state_[4] = {0, 0, 0, 0};
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace fedmkg
