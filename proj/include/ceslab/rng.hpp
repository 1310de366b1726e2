#pragma once
// Deterministic random samplers. Every case derives its stream from
// (seed, case name) through FNV-1a, so reports are bitwise reproducible and
// independent of worker scheduling.

#include <cstdint>
#include <string_view>

#include "ceslab/core.hpp"

namespace ceslab {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

class CaseRng {
public:
    CaseRng(std::uint64_t seed, std::string_view name) : state_(seed ^ fnv1a(name)) {
        if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
        for (int i = 0; i < 4; ++i) next();  // decorrelate nearby seeds
    }

    std::uint64_t next() {  // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    double uniform() { return (next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    // heavy-tailed nonnegative magnitude (Pareto-like, stresses constants)
    double heavy() {
        double u = uniform();
        double a = uniform(1.2, 3.0);
        return std::pow(std::max(u, 1e-12), -1.0 / a) - 1.0 + 0.05 * uniform();
    }

    Seq seq(std::size_t n, bool nonneg = true, double zero_frac = 0.2) {
        std::vector<double> v(n);
        for (double& x : v) {
            if (uniform() < zero_frac) {
                x = 0;
                continue;
            }
            x = heavy();
            if (!nonneg && uniform() < 0.5) x = -x;
        }
        if (n > 0 && v[n - 1] == 0) v[n - 1] = 1e-3 + uniform();
        return Seq(std::move(v));
    }

    // piecewise-constant function with a log-spaced support inside the domain
    PCFun pcfun(Domain dom, std::size_t cells, double eps = 1e-6, double tmax = 1e6,
                bool nonneg = true) {
        double lo, hi;
        if (dom == Domain::Unit) {
            double l1 = uniform(std::log(1e-4), std::log(0.5));
            double l2 = uniform(l1 + 0.3, std::log(1.0));
            lo = std::exp(l1);
            hi = std::min(1.0, std::exp(l2));
        } else {
            double le = std::log(eps), lt = std::log(tmax);
            double l1 = uniform(le, lt - 0.5);
            double l2 = uniform(l1 + 0.4, lt);
            lo = std::exp(l1);
            hi = std::exp(l2);
        }
        auto xs = log_grid(lo, hi, cells);
        std::vector<double> v(cells);
        for (double& x : v) {
            x = uniform() < 0.15 ? 0.0 : heavy();
            if (!nonneg && uniform() < 0.5) x = -x;
        }
        return PCFun(dom, std::move(xs), std::move(v));
    }

private:
    std::uint64_t state_;
};

}  // namespace ceslab
