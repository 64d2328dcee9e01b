#include "fedmkg/rng.hpp"

#include <cmath>
#include <unordered_set>

#include "fedmkg/errors.hpp"

namespace fedmkg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

Rng Rng::fork(std::string_view name) const {
    std::uint64_t mix = seed_ ^ 0x5851f42d4c957f2dULL;
    std::uint64_t child = splitmix64(mix) ^ fnv1a64(name);
    return Rng(splitmix64(child));
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_int: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // Box-Muller; u1 kept away from 0 for the log.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = kTwoPi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double alpha) {
    if (alpha <= 0.0) throw ConfigError("gamma: alpha must be > 0");
    if (alpha < 1.0) {
        // Boost to alpha+1 (Marsaglia-Tsang note).
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
            return d * v;
    }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
    if (k == 0) throw ConfigError("dirichlet: k must be >= 1");
    std::vector<double> out(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = gamma(alpha);
        sum += out[i];
    }
    if (sum <= 1e-300) {
        // All draws underflowed (tiny alpha); fall back to uniform.
        for (double& v : out) v = 1.0 / static_cast<double>(k);
        return out;
    }
    for (double& v : out) v /= sum;
    return out;
}

void Rng::fill_normal(Matrix& m, double mean, double stddev) {
    for (double& v : m.data) v = mean + stddev * normal();
}

void Rng::fill_uniform(Matrix& m, double lo, double hi) {
    for (double& v : m.data) v = uniform(lo, hi);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n,
                                                         std::size_t k,
                                                         std::size_t exclude) {
    if (k >= n)
        throw ConfigError("sample_without_replacement: k must be < n");
    // Dense path when k is a large fraction of n, rejection otherwise.
    if (k * 2 >= n) {
        std::vector<std::size_t> pool;
        pool.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i)
            if (i != exclude) pool.push_back(i);
        shuffle(pool);
        pool.resize(k);
        return pool;
    }
    std::unordered_set<std::size_t> seen;
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
        std::size_t x = static_cast<std::size_t>(uniform_int(n));
        if (x == exclude || seen.count(x)) continue;
        seen.insert(x);
        out.push_back(x);
    }
    return out;
}

}  // namespace fedmkg
