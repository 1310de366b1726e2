#pragma once
// Continuous operator kernels on piecewise-constant functions.
//
// Two layers:
//   * exact node evaluators (cesaro_at, copson_at and the exact composites):
//     for a finitely supported step function every integral below has a
//     closed form, including the full tail to infinity, so identities can be
//     checked to rounding accuracy;
//   * grid-sampled operators (cesaro_fn, copson_fn, ...): the image is
//     sampled back onto a refined grid so that composition stays closed in
//     PCFun. Sampling error is governed by the grid policy.

#include "ceslab/core.hpp"

namespace ceslab {

// Truncation/refinement policy for the half-line and operator images.
struct GridPolicy {
    double eps = 1e-6;   // left truncation of [0, inf)
    double tmax = 1e6;   // right truncation of [0, inf)
    int refine = 2;      // cell split factor for operator images
};

namespace detail {

// Prefix integrals A_i = int_{x0}^{x_i} |f| and suffix log-integrals
// L_i = int_{x_i}^{xN} |f(t)|/t dt at the breakpoints.
struct FnCalc {
    const PCFun& f;
    std::vector<double> prefix;   // size xs.size()
    std::vector<double> suffix_log;

    explicit FnCalc(const PCFun& fn) : f(fn) {
        std::size_t n = f.cell_count();
        prefix.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            prefix[i + 1] = prefix[i] + std::fabs(f.cells[i]) * f.width(i);
        suffix_log.assign(n + 1, 0.0);
        for (std::size_t i = n; i-- > 0;) {
            double a = f.xs[i], b = f.xs[i + 1];
            double piece = (a > 0) ? std::fabs(f.cells[i]) * std::log(b / a) : kInf;
            if (std::fabs(f.cells[i]) == 0.0) piece = 0.0;
            suffix_log[i] = suffix_log[i + 1] + piece;
        }
    }

    std::size_t cell_of(double x) const {
        auto it = std::upper_bound(f.xs.begin(), f.xs.end(), x);
        std::size_t i = static_cast<std::size_t>(it - f.xs.begin());
        return i == 0 ? 0 : i - 1;
    }

    double mass() const { return prefix.back(); }

    // int_0^x |f|
    double prefix_at(double x) const {
        if (x <= f.start()) return 0.0;
        if (x >= f.end()) return mass();
        std::size_t i = cell_of(x);
        return prefix[i] + std::fabs(f.cells[i]) * (x - f.xs[i]);
    }

    // int_{[x, inf)} |f(t)|/t dt
    double suffix_log_at(double x) const {
        if (x <= f.start()) return suffix_log.front();
        if (x >= f.end()) return 0.0;
        std::size_t i = cell_of(x);
        return suffix_log[i + 1] + std::fabs(f.cells[i]) * std::log(f.xs[i + 1] / x);
    }
};

}  // namespace detail

inline double total_mass(const PCFun& f) { return f.integral_abs(); }

// C|f|(x) = (1/x) int_0^x |f|, with the limit value at x = 0.
inline double cesaro_at(const PCFun& f, double x) {
    if (x < 0) throw Error("cesaro_at: x must be nonnegative");
    detail::FnCalc c(f);
    if (x == 0) return f.start() == 0 ? std::fabs(f.cells.front()) : 0.0;
    return c.prefix_at(x) / x;
}

// C*|f|(x) = int_{[x,inf) cap I} |f(t)|/t dt.
inline double copson_at(const PCFun& f, double x) {
    detail::FnCalc c(f);
    return c.suffix_log_at(std::max(x, 0.0));
}

namespace detail {

// Closed-form integral of C|f| over [a, b] (a >= x0 handled piecewise; on a
// cell C|f|(t) = v + (A_i - v x_i)/t with v = |cell value|).
inline double int_cesaro(const FnCalc& c, double a, double b) {
    const PCFun& f = c.f;
    if (b <= a) return 0.0;
    double s = 0.0;
    double lo = a;
    if (lo < f.start()) lo = f.start();  // C|f| = 0 below the carrier
    // inside the carrier
    while (lo < std::min(b, f.end())) {
        std::size_t i = c.cell_of(lo);
        double hi = std::min({b, f.xs[i + 1], f.end()});
        double v = std::fabs(f.cells[i]);
        double k = c.prefix[i] - v * f.xs[i];
        double term = v * (hi - lo);
        if (k != 0.0) {
            if (lo <= 0) return kInf;  // cannot happen when the carrier starts at 0 (k = 0 there)
            term += k * std::log(hi / lo);
        }
        s += term;
        lo = hi;
    }
    // beyond the carrier: C|f|(t) = mass/t
    if (b > f.end()) {
        double from = std::max(a, f.end());
        if (from > 0) s += c.mass() * std::log(b / from);
    }
    return s;
}

// Closed-form integral of C|f|(t)/t over [a, b] (b may be kInf).
inline double int_cesaro_over_t(const FnCalc& c, double a, double b) {
    const PCFun& f = c.f;
    if (!(b > a)) return 0.0;
    double s = 0.0;
    double lo = std::max(a, f.start());
    while (lo < std::min(b, f.end())) {
        std::size_t i = c.cell_of(lo);
        double hi = std::min({b, f.xs[i + 1], f.end()});
        double v = std::fabs(f.cells[i]);
        double k = c.prefix[i] - v * f.xs[i];
        if (lo <= 0) {
            if (v != 0 || k != 0) return kInf;  // int of C|f|/t diverges at 0
        } else {
            // int (v/t + k/t^2) dt = v ln + k (1/lo - 1/hi)
            s += v * std::log(hi / lo) + k * (1.0 / lo - 1.0 / hi);
        }
        lo = hi;
    }
    if (b > f.end()) {
        double from = std::max(a, f.end());
        if (from > 0)
            s += c.mass() * (1.0 / from - (b == kInf ? 0.0 : 1.0 / b));
    }
    return s;
}

// Closed-form integral of C*|f| over [a, b]. On a cell C*|f|(t) =
// L_{i+1} + v ln(x_{i+1}/t); below the carrier it is constant, above zero.
inline double int_copson(const FnCalc& c, double a, double b) {
    const PCFun& f = c.f;
    if (!(b > a)) return 0.0;
    double s = 0.0;
    if (a < f.start()) {
        s += c.suffix_log.front() * (std::min(b, f.start()) - a);
    }
    double lo = std::max(a, f.start());
    while (lo < std::min(b, f.end())) {
        std::size_t i = c.cell_of(lo);
        double hi = std::min({b, f.xs[i + 1], f.end()});
        double v = std::fabs(f.cells[i]);
        double K = c.suffix_log[i + 1] + v * std::log(f.xs[i + 1]);
        // int (K - v ln t) dt = K dt - v (t ln t - t); t ln t -> 0 at t = 0
        auto F = [&](double t) { return t == 0 ? 0.0 : K * t - v * (t * std::log(t) - t); };
        s += F(hi) - F(lo);
        lo = hi;
    }
    return s;
}

}  // namespace detail

// C*C|f|(x) = int_x^sup C|f|(t)/t dt, exact including the tail. On the
// half-line the upper limit is infinity; on [0,1] it is 1.
inline double copson_cesaro_at(const PCFun& f, double x) {
    detail::FnCalc c(f);
    double top = f.domain == Domain::Unit ? 1.0 : kInf;
    return detail::int_cesaro_over_t(c, x, top);
}

// CC|f|(x) = (1/x) int_0^x C|f|.
inline double cesaro_cesaro_at(const PCFun& f, double x) {
    if (!(x > 0)) throw Error("cesaro_cesaro_at: x must be positive");
    detail::FnCalc c(f);
    return detail::int_cesaro(c, 0.0, x) / x;
}

// CC*|f|(x) = (1/x) int_0^x C*|f|.
inline double cesaro_copson_at(const PCFun& f, double x) {
    if (!(x > 0)) throw Error("cesaro_copson_at: x must be positive");
    detail::FnCalc c(f);
    return detail::int_copson(c, 0.0, x) / x;
}

namespace detail {

// Output grid for operator images: refined carrier plus a log-spaced
// extension over the part of the domain the image spreads into.
inline std::vector<double> image_grid(const PCFun& f, const GridPolicy& gp, bool extend_right,
                                      bool extend_left) {
    PCFun r = refined(f, gp.refine);
    std::vector<double> xs = r.xs;
    if (extend_right) {
        double end = f.domain == Domain::Unit ? 1.0 : gp.tmax;
        if (xs.back() < end) {
            double span_in = (f.start() > 0) ? std::log(f.end() / f.start()) : 3.0;
            double span_ext = std::log(end / xs.back());
            std::size_t cells = std::max<std::size_t>(
                8, static_cast<std::size_t>(static_cast<double>(r.cell_count()) * span_ext /
                                            std::max(span_in, 0.1)));
            cells = std::min<std::size_t>(cells, 4 * r.cell_count() + 64);
            auto ext = log_grid(xs.back(), end, cells);
            xs.insert(xs.end(), ext.begin() + 1, ext.end());
        }
    }
    if (extend_left) {
        double lo = f.domain == Domain::Unit ? 0.0 : gp.eps;
        // the image is constant below the carrier, one cell is exact
        if (xs.front() > lo) xs.insert(xs.begin(), lo);
    }
    return xs;
}

template <class Eval>
inline PCFun sample_on(const PCFun& f, std::vector<double> xs, Eval&& at) {
    std::vector<double> cells(xs.size() - 1);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        double v = at(xs[i]);
        if (!finite(v)) v = at(xs[i + 1]);  // divergent left endpoint (x = 0)
        cells[i] = v;
    }
    return PCFun(f.domain, std::move(xs), std::move(cells));
}

}  // namespace detail

// Grid-sampled Cesaro image: exact node values of C|f| on the refined grid,
// extended rightwards across the domain (C|f| = mass/x beyond the carrier).
inline PCFun cesaro_fn(const PCFun& f, const GridPolicy& gp = {}) {
    detail::FnCalc c(f);
    auto xs = detail::image_grid(f, gp, /*extend_right=*/true, /*extend_left=*/false);
    return detail::sample_on(f, std::move(xs), [&](double x) {
        if (x == 0) return f.start() == 0 ? std::fabs(f.cells.front()) : 0.0;
        return c.prefix_at(x) / x;
    });
}

// Grid-sampled Copson image, extended leftwards (constant below the carrier).
inline PCFun copson_fn(const PCFun& f, const GridPolicy& gp = {}) {
    detail::FnCalc c(f);
    auto xs = detail::image_grid(f, gp, /*extend_right=*/false, /*extend_left=*/true);
    return detail::sample_on(f, std::move(xs), [&](double x) { return c.suffix_log_at(x); });
}

// Nonincreasing majorant: right-to-left running maximum of |cells|, exact.
inline PCFun majorant_fn(const PCFun& f) {
    std::vector<double> out(f.cell_count());
    double run = 0;
    for (std::size_t i = f.cell_count(); i-- > 0;) {
        run = std::max(run, std::fabs(f.cells[i]));
        out[i] = run;
    }
    return PCFun(f.domain, f.xs, std::move(out));
}

// sigma_tau f(x) = f(x/tau) chi_I(x/tau): breakpoints scale by tau; on [0,1]
// the image is clipped at 1.
inline PCFun dilate_fn(const PCFun& f, double tau) {
    if (!(tau > 0)) throw Error("dilate_fn: tau must be positive");
    std::vector<double> xs, cells;
    for (std::size_t i = 0; i < f.cell_count(); ++i) {
        double a = f.xs[i] * tau, b = f.xs[i + 1] * tau;
        if (f.domain == Domain::Unit) {
            if (a >= 1.0) break;
            b = std::min(b, 1.0);
        }
        if (xs.empty()) xs.push_back(a);
        xs.push_back(b);
        cells.push_back(f.cells[i]);
    }
    if (cells.empty()) {  // fully clipped: keep a zero stub on [0,1]
        return PCFun(f.domain, {0.0, 1.0}, {0.0});
    }
    return PCFun(f.domain, std::move(xs), std::move(cells));
}

// Hardy-Littlewood maximal operator restricted to grid-node interval
// endpoints. This under-approximates the true sup; refinement converges.
// O(N^2) overall via suffix maxima of the average as a function of the right
// endpoint.
inline PCFun maximal_fn(const PCFun& f) {
    std::size_t n = f.cell_count();
    std::vector<double> F(n + 1, 0.0);  // antiderivative of |f| at nodes
    for (std::size_t i = 0; i < n; ++i) F[i + 1] = F[i] + std::fabs(f.cells[i]) * f.width(i);
    std::vector<double> M(n, 0.0);
    std::vector<double> H(n + 1, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        // H[i] = max over b > i of the average on [x_a, x_b]
        H[n] = -kInf;
        for (std::size_t b = n; b > a; --b) {
            double avg = (F[b] - F[a]) / (f.xs[b] - f.xs[a]);
            H[b - 1] = std::max(b < n ? H[b] : -kInf, avg);
        }
        for (std::size_t i = a; i < n; ++i) M[i] = std::max(M[i], H[i]);
    }
    return PCFun(f.domain, f.xs, std::move(M));
}

// Exact decreasing rearrangement: cells sorted by |value| descending, laid
// out by cumulative length from 0.
inline PCFun rearrange_fn(const PCFun& f) {
    std::size_t n = f.cell_count();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
        return std::fabs(f.cells[i]) > std::fabs(f.cells[j]);
    });
    std::vector<double> xs(n + 1), cells(n);
    xs[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        xs[k + 1] = xs[k] + f.width(idx[k]);
        cells[k] = std::fabs(f.cells[idx[k]]);
    }
    return PCFun(f.domain, std::move(xs), std::move(cells));
}

}  // namespace ceslab
