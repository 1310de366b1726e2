#pragma once
// Small optimization toolkit shared by the norm engine and the interpolation
// solvers: golden-section line search, projected gradient descent on a box,
// and the balanced two-norm minimax loop used by the Calderon-Lozanovskii
// power construction.

#include <functional>
#include <vector>

#include "ceslab/core.hpp"

namespace ceslab {

struct SolverPolicy {
    int multistart = 8;
    long max_iterations = 5000;
    double rel_tol = 1e-6;
    long cl_max_iterations = 10000;
    double cl_gap_tol = 1e-6;
};

namespace opt {

// Golden-section minimization of a unimodal function on [lo, hi].
inline std::pair<double, double> golden_min(const std::function<double(double)>& f, double lo,
                                            double hi, int iters = 80) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - r * (b - a), x2 = a + r * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    return f1 <= f2 ? std::make_pair(x1, f1) : std::make_pair(x2, f2);
}

inline void clamp_box(std::vector<double>& g, const std::vector<double>& cap) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::clamp(g[i], 0.0, cap[i]);
}

struct BoxResult {
    std::vector<double> g;
    double value = kInf;
    long iterations = 0;
    bool converged = false;
};

// Projected gradient descent with backtracking on 0 <= g <= cap. `eval`
// returns the objective and fills the (sub)gradient. Tracks the best
// iterate, which makes the loop safe for nonsmooth objectives.
inline BoxResult box_descent(const std::function<double(const std::vector<double>&, std::vector<double>&)>& eval,
                             std::vector<double> g0, const std::vector<double>& cap,
                             long max_iter, double rel_tol) {
    BoxResult best;
    std::vector<double> g = std::move(g0);
    clamp_box(g, cap);
    std::vector<double> grad(g.size()), trial(g.size()), tgrad(g.size());
    double fg = eval(g, grad);
    best.g = g;
    best.value = fg;
    double scale = 0;
    for (double c : cap) scale = std::max(scale, c);
    double step = scale > 0 ? scale : 1.0;
    long it = 0;
    int stall = 0;
    for (; it < max_iter && stall < 12; ++it) {
        bool improved = false;
        double s = step;
        for (int bt = 0; bt < 24; ++bt) {
            for (std::size_t i = 0; i < g.size(); ++i) trial[i] = g[i] - s * grad[i];
            clamp_box(trial, cap);
            double ft = eval(trial, tgrad);
            if (ft < fg - 1e-18) {
                improved = true;
                bool big = fg - ft > rel_tol * std::max(1e-300, std::fabs(fg));
                g.swap(trial);
                grad.swap(tgrad);
                fg = ft;
                if (fg < best.value) {
                    best.value = fg;
                    best.g = g;
                }
                step = s * 2.0;
                stall = big ? 0 : stall + 1;
                break;
            }
            s *= 0.25;
        }
        if (!improved) {
            ++stall;
            step *= 0.25;
        }
        if (step < 1e-250) break;
    }
    best.iterations = it;
    best.converged = it < max_iter;  // exited by stall, not by the budget
    return best;
}

}  // namespace opt
}  // namespace ceslab
