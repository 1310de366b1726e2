#pragma once
// Recursive norm evaluation for space descriptors.
//
// Elements are absolutized on entry (ideal-space norms only see |f|).
// Cesaro images of finitely supported data carry an analytic power tail
// (mass/n resp. mass/x beyond the computed head); leaves integrate those
// tails in closed form or bracket them by integral bounds, so ces_p-type
// norms do not lose their slowly decaying tails to truncation. Divergence is
// a first-class result: a flag plus the truncation scale that witnesses it.

#include <cstdint>
#include <functional>
#include <random>

#include "ceslab/ops_fun.hpp"
#include "ceslab/ops_seq.hpp"
#include "ceslab/solver.hpp"
#include "ceslab/space.hpp"

namespace ceslab {

struct NormResult {
    double value = 0;
    double errorBound = 0;  // estimated relative numerical error
    long solverIterations = 0;
    bool divergent = false;
    double witnessScale = 0;  // truncation scale witnessing a divergence flag

    void absorb_meta(const NormResult& o) {
        errorBound = std::max(errorBound, o.errorBound);
        solverIterations += o.solverIterations;
        if (o.divergent && !divergent) {
            divergent = true;
            witnessScale = o.witnessScale;
        }
    }
};

struct EvalPolicy {
    GridPolicy grid;
    SolverPolicy solver;
    int seq_len_factor = 4;  // discrete Cesaro image length = factor * support
    std::uint64_t solver_seed = 0x9E3779B97F4A7C15ull;
};

namespace detail {

// --- internal elements: nonnegative head plus an analytic power tail ------

struct SeqElem {
    std::vector<double> v;  // nonnegative entries 1..N
    double tail_c = 0;      // value tail_c * n^{-tail_e} for n > N
    double tail_e = 1;
    bool has_tail() const { return tail_c > 0; }

    std::size_t support() const {
        std::size_t n = v.size();
        while (n > 0 && v[n - 1] == 0.0) --n;
        return n;
    }
};

struct FnElem {
    PCFun f;            // nonnegative cells
    double tail_c = 0;  // value tail_c * x^{-tail_e} for x > f.end() (Half only)
    double tail_e = 1;
    bool has_tail() const { return tail_c != 0; }
};

inline SeqElem make_seq_elem(const Seq& a) {
    SeqElem e;
    e.v = a.abs().values;
    return e;
}
inline FnElem make_fn_elem(const PCFun& f) { return FnElem{f.abs(), 0, 1}; }

inline void materialize_seq(SeqElem& e, std::size_t len) {
    if (!e.has_tail()) return;
    std::size_t n0 = e.v.size();
    if (len > n0) {
        e.v.resize(len);
        for (std::size_t n = n0 + 1; n <= len; ++n)
            e.v[n - 1] = e.tail_c * std::pow(static_cast<double>(n), -e.tail_e);
    }
    e.tail_c = 0;
}

inline void materialize_fn(FnElem& e, const GridPolicy& gp) {
    if (!e.has_tail()) return;
    double from = e.f.end();
    if (from < gp.tmax) {
        double span = std::log(gp.tmax / from);
        std::size_t cells = std::max<std::size_t>(16, static_cast<std::size_t>(
                                                          span * 12.0));
        auto ext = log_grid(from, gp.tmax, cells);
        std::vector<double> xs = e.f.xs, vv = e.f.cells;
        for (std::size_t i = 0; i + 1 < ext.size(); ++i) {
            xs.push_back(ext[i + 1]);
            double mid = std::sqrt(ext[i] * ext[i + 1]);
            vv.push_back(e.tail_c * std::pow(mid, -e.tail_e));
        }
        e.f = PCFun(e.f.domain, std::move(xs), std::move(vv));
    }
    e.tail_c = 0;
}

// --- weighted leaf norms ---------------------------------------------------

// Integral over [a,b] of (prod of weights)^p; closed form when the product
// is a single power family, Gauss-Legendre on the cell otherwise.
inline double weights_pow_integral(const std::vector<Weight>& ws, double a, double b, double p);
inline double weights_pow_sup(const std::vector<Weight>& ws, double a, double b, double p);

inline void split_points(const std::vector<Weight>& ws, double a, double b,
                         std::vector<double>& pts) {
    pts.clear();
    pts.push_back(a);
    for (const Weight& w : ws) {
        Weight::Form f = w.form();
        if (f.base == Weight::Form::Base::Sampled) {
            for (double x : f.pc->xs)
                if (x > a && x < b) pts.push_back(x);
        }
    }
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
}

inline double weights_pow_integral(const std::vector<Weight>& ws, double a, double b, double p) {
    if (!(b > a)) return 0.0;
    if (ws.empty()) return b - a;
    std::vector<double> pts;
    split_points(ws, a, b, pts);
    double total = 0;
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        double lo = pts[s], hi = pts[s + 1];
        double ex = 0, eo = 0, cst = 1;
        bool zero = false;
        for (const Weight& w : ws) {
            Weight::Form f = w.form();
            switch (f.base) {
                case Weight::Form::Base::PowX: ex += f.e; break;
                case Weight::Form::Base::PowOneMinusX: eo += f.e; break;
                case Weight::Form::Base::Sampled: {
                    double v = f.pc->value_at(0.5 * (lo + hi));
                    if (v == 0) {
                        zero = !f.pc_recip;  // outside the sampled carrier
                        if (f.pc_recip) return kInf;
                    } else {
                        cst *= f.pc_recip ? 1.0 / v : v;
                    }
                    break;
                }
            }
        }
        if (zero) continue;
        double cp = std::pow(cst, p);
        if (eo == 0) {
            total += cp * Weight::power(ex).pow_integral(lo, hi, p);
        } else if (ex == 0) {
            total += cp * Weight::one_minus().pow_integral(lo, hi, p * eo);
        } else {
            // mixed x^a (1-x)^b factor: 16-point Gauss-Legendre, one split
            static const double gx[8] = {0.0950125098376374, 0.2816035507792589,
                                         0.4580167776572274, 0.6178762444026438,
                                         0.7554044083550030, 0.8656312023878318,
                                         0.9445750230732326, 0.9894009349916499};
            static const double gw[8] = {0.1894506104550685, 0.1826034150449236,
                                         0.1691565193950025, 0.1495959888165767,
                                         0.1246289712555339, 0.0951585116824928,
                                         0.0622535239386479, 0.0271524594117541};
            auto gl = [&](double x0, double x1) {
                double c = 0.5 * (x0 + x1), h = 0.5 * (x1 - x0), ssum = 0;
                for (int i = 0; i < 8; ++i) {
                    for (double sgn : {-1.0, 1.0}) {
                        double x = c + sgn * h * gx[i];
                        ssum += gw[i] * std::pow(x, ex * p) * std::pow(1.0 - x, eo * p);
                    }
                }
                return ssum * h;
            };
            double mid = 0.5 * (lo + hi);
            total += cp * (gl(lo, mid) + gl(mid, hi));
        }
    }
    return total;
}

inline double weights_pow_sup(const std::vector<Weight>& ws, double a, double b, double p) {
    if (ws.empty()) return 1.0;
    std::vector<double> pts;
    split_points(ws, a, b, pts);
    double best = 0;
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        double lo = pts[s], hi = pts[s + 1];
        double ex = 0, eo = 0, cst = 1;
        bool zero = false;
        for (const Weight& w : ws) {
            Weight::Form f = w.form();
            switch (f.base) {
                case Weight::Form::Base::PowX: ex += f.e; break;
                case Weight::Form::Base::PowOneMinusX: eo += f.e; break;
                case Weight::Form::Base::Sampled: {
                    double v = f.pc->value_at(0.5 * (lo + hi));
                    if (v == 0) {
                        zero = !f.pc_recip;
                        if (f.pc_recip) return kInf;
                    } else {
                        cst *= f.pc_recip ? 1.0 / v : v;
                    }
                    break;
                }
            }
        }
        if (zero) continue;
        auto val = [&](double x) {
            double r = cst;
            if (ex != 0) r *= std::pow(x, ex);
            if (eo != 0) r *= std::pow(1.0 - x, eo);
            return std::pow(r, p);
        };
        if (eo * p < 0 && hi >= 1.0) return kInf;  // ess-sup blows up at 1
        if (ex * p < 0 && lo <= 0.0) return kInf;
        best = std::max({best, val(lo), val(std::nextafter(hi, lo))});
        if (ex * eo < 0 || (ex > 0 && eo > 0)) {
            double crit = ex / (ex + eo);  // stationary point of x^ex (1-x)^eo
            if (finite(crit) && crit > lo && crit < hi) best = std::max(best, val(crit));
        }
    }
    return best;
}

// integral-comparison bracket for sum_{n>N} n^{-E}
inline std::pair<double, double> power_tail_bracket(double E, double N) {
    if (!(E > 1)) return {kInf, kInf};
    auto T = [&](double x) { return std::pow(x, 1.0 - E) / (E - 1.0); };
    return {T(N + 1.0), T(N)};
}

// --- leaf evaluation ---------------------------------------------------

inline NormResult leaf_seq_norm(double p, const std::vector<Weight>& ws, const SeqElem& e) {
    NormResult r;
    double we = 0;  // total power-weight exponent; sequence weights are powers
    for (const Weight& w : ws) we += w.form().e;
    auto wval = [&](double n) { return we == 0 ? 1.0 : std::pow(n, we); };
    std::size_t N = e.v.size();
    if (p == kInf) {
        double m = 0;
        for (std::size_t n = 1; n <= N; ++n) m = std::max(m, e.v[n - 1] * wval(double(n)));
        if (e.has_tail()) {
            double expo = we - e.tail_e;
            if (expo < 0)
                m = std::max(m, e.tail_c * std::pow(double(N + 1), expo));
            else if (expo == 0)
                m = std::max(m, e.tail_c);
            else {
                r.divergent = true;
                r.witnessScale = double(N);
                m = std::max(m, e.tail_c * std::pow(double(N + 1), expo));
            }
        }
        r.value = m;
        return r;
    }
    double S = 0;
    for (std::size_t n = 1; n <= N; ++n) {
        double t = e.v[n - 1] * wval(double(n));
        if (t != 0) S += std::pow(t, p);
    }
    if (e.has_tail()) {
        double E = p * (e.tail_e - we);
        auto [lo, hi] = power_tail_bracket(E, double(N));
        if (!finite(hi)) {
            r.divergent = true;
            r.witnessScale = double(N);
        } else {
            double cp = std::pow(e.tail_c, p);
            S += cp * 0.5 * (lo + hi);
            double dv = cp * 0.5 * (hi - lo);
            if (S > 0) r.errorBound = std::max(r.errorBound, dv / (p * S));
        }
    }
    r.value = std::pow(S, 1.0 / p);
    return r;
}

inline NormResult leaf_fn_norm(double p, const std::vector<Weight>& ws, const FnElem& e) {
    NormResult r;
    const PCFun& f = e.f;
    if (p == kInf) {
        double m = 0;
        for (std::size_t i = 0; i < f.cell_count(); ++i)
            if (f.cells[i] != 0) {
                double sp = weights_pow_sup(ws, f.xs[i], f.xs[i + 1], 1.0);
                if (!finite(sp)) {
                    r.divergent = true;
                    r.witnessScale = f.xs[i];
                    continue;
                }
                m = std::max(m, f.cells[i] * sp);
            }
        if (e.has_tail()) {
            double we = 0;
            for (const Weight& w : ws) {
                auto fm = w.form();
                if (fm.base == Weight::Form::Base::PowX) we += fm.e;
            }
            double expo = we - e.tail_e;
            double edge = e.tail_c * std::pow(f.end(), expo);
            if (expo <= 0)
                m = std::max(m, edge);
            else {
                r.divergent = true;
                r.witnessScale = f.end();
                m = std::max(m, edge);
            }
        }
        r.value = m;
        return r;
    }
    double S = 0;
    for (std::size_t i = 0; i < f.cell_count(); ++i) {
        if (f.cells[i] == 0) continue;
        double wi = weights_pow_integral(ws, f.xs[i], f.xs[i + 1], p);
        if (!finite(wi)) {
            r.divergent = true;
            r.witnessScale = f.xs[i];
            continue;
        }
        S += std::pow(f.cells[i], p) * wi;
    }
    if (e.has_tail()) {
        double we = 0;
        for (const Weight& w : ws) {
            auto fm = w.form();
            if (fm.base == Weight::Form::Base::PowX) we += fm.e;
        }
        double E = p * (e.tail_e - we);  // integrand ~ x^{-E}
        double X = f.end();
        if (E > 1) {
            S += std::pow(e.tail_c, p) * std::pow(X, 1.0 - E) / (E - 1.0);
        } else {
            r.divergent = true;
            r.witnessScale = X;
        }
    }
    r.value = std::pow(S, 1.0 / p);
    return r;
}

// --- forward declarations for CL / RealK nodes (interpolation.hpp) --------

struct EvalHooks;
NormResult eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol);
NormResult eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol);
NormResult cl_eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol);
NormResult cl_eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol);
NormResult realk_eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol);
NormResult realk_eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol);

// --- sum-node decomposition solver ----------------------------------------

// Evaluate ||g||_left + tmul*||x - g||_right over 0 <= g <= cap, where
// entries are sequence values or function cells on a fixed grid.
struct BoxNormProblem {
    std::function<NormResult(const std::vector<double>&)> norm_left, norm_right;
    // analytic (value, gradient); empty when no gradient route exists
    std::function<double(const std::vector<double>&, std::vector<double>&)> grad_left, grad_right;
    std::vector<double> cap;
    double tmul = 1.0;
    bool use_max = false;  // max(.,.) objective instead of the sum
};

struct SumSolveOutcome {
    NormResult result;
    std::vector<double> g;
};

inline SumSolveOutcome solve_box_norm(const BoxNormProblem& pb, const SolverPolicy& sp,
                                      std::uint64_t seed) {
    const std::size_t n = pb.cap.size();
    long evals = 0;
    bool child_div = false;
    double child_witness = 0;
    double child_err = 0;

    std::vector<double> res(n);
    auto value_of = [&](const std::vector<double>& g) {
        for (std::size_t i = 0; i < n; ++i) res[i] = pb.cap[i] - g[i];
        NormResult a = pb.norm_left(g);
        NormResult b = pb.norm_right(res);
        ++evals;
        if (a.divergent || b.divergent) {
            child_div = true;
            child_witness = a.divergent ? a.witnessScale : b.witnessScale;
        }
        child_err = std::max({child_err, a.errorBound, b.errorBound});
        return pb.use_max ? std::max(a.value, pb.tmul * b.value)
                          : a.value + pb.tmul * b.value;
    };

    SumSolveOutcome out;
    out.g.assign(n, 0.0);
    double best = kInf;
    auto consider = [&](const std::vector<double>& g) {
        double v = value_of(g);
        if (v < best) {
            best = v;
            out.g = g;
        }
        return v;
    };

    std::vector<double> g(n);
    // corners and midpoint
    consider(pb.cap);
    std::fill(g.begin(), g.end(), 0.0);
    consider(g);
    for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 * pb.cap[i];
    consider(g);

    // threshold families: g = min(cap, lam) and g = (cap - lam)_+
    double vmax = 0, vmin = kInf;
    for (double c : pb.cap) {
        vmax = std::max(vmax, c);
        if (c > 0) vmin = std::min(vmin, c);
    }
    if (vmax > 0) {
        double llo = std::log(std::max(vmin * 1e-3, vmax * 1e-12));
        double lhi = std::log(vmax * 1.0000001);
        auto fam = [&](bool upper, double ll) {
            double lam = std::exp(ll);
            for (std::size_t i = 0; i < n; ++i)
                g[i] = upper ? std::max(pb.cap[i] - lam, 0.0) : std::min(pb.cap[i], lam);
            return value_of(g);
        };
        for (bool upper : {true, false}) {
            auto [ll, fv] = opt::golden_min([&](double t) { return fam(upper, t); }, llo, lhi, 48);
            double lam = std::exp(ll);
            for (std::size_t i = 0; i < n; ++i)
                g[i] = upper ? std::max(pb.cap[i] - lam, 0.0) : std::min(pb.cap[i], lam);
            consider(g);
            (void)fv;
        }
    }

    const bool has_grad = static_cast<bool>(pb.grad_left) && static_cast<bool>(pb.grad_right);
    std::vector<double> gl(n), gr(n), grad(n);
    auto eval_grad = [&](const std::vector<double>& gg, std::vector<double>& gout) {
        for (std::size_t i = 0; i < n; ++i) res[i] = pb.cap[i] - gg[i];
        double a = pb.grad_left(gg, gl);
        double b = pb.grad_right(res, gr);
        ++evals;
        if (pb.use_max) {
            double tb = pb.tmul * b;
            if (a > tb) {
                gout = gl;
            } else if (tb > a) {
                for (std::size_t i = 0; i < n; ++i) gout[i] = -pb.tmul * gr[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) gout[i] = 0.5 * (gl[i] - pb.tmul * gr[i]);
            }
            return std::max(a, tb);
        }
        for (std::size_t i = 0; i < n; ++i) gout[i] = gl[i] - pb.tmul * gr[i];
        return a + pb.tmul * b;
    };

    if (has_grad) {
        // gradient-sign corner: one "infinite step"
        for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 * pb.cap[i];
        eval_grad(g, grad);
        for (std::size_t i = 0; i < n; ++i) g[i] = grad[i] < 0 ? pb.cap[i] : 0.0;
        consider(g);
    }

    // random restarts (corners 3 + thresholds 2 + gradient corner 1 = 6 starts)
    std::mt19937_64 eng(seed);
    auto uni = [&]() { return (eng() >> 11) * 0x1.0p-53; };
    int nrand = std::max(0, sp.multistart - 6);
    for (int k = 0; k < nrand; ++k) {
        for (std::size_t i = 0; i < n; ++i) g[i] = uni() * pb.cap[i];
        consider(g);
    }

    if (has_grad) {
        auto polish = opt::box_descent(
            [&](const std::vector<double>& gg, std::vector<double>& gout) {
                return eval_grad(gg, gout);
            },
            out.g, pb.cap, sp.max_iterations, sp.rel_tol);
        evals += polish.iterations;
        if (polish.value < best) {
            best = polish.value;
            out.g = polish.g;
        }
        out.result.solverIterations = polish.iterations;
        if (!polish.converged) out.result.errorBound = std::max(out.result.errorBound, sp.rel_tol);
    } else if (n <= 256) {
        // finite-difference polish
        auto fd = [&](const std::vector<double>& gg, std::vector<double>& gout) {
            double f0 = value_of(gg);
            std::vector<double> t = gg;
            const double h = 6e-6 * std::max(1e-12, vmax);
            for (std::size_t i = 0; i < n; ++i) {
                double up = std::min(gg[i] + h, pb.cap[i]);
                double dn = std::max(gg[i] - h, 0.0);
                if (!(up > dn)) {
                    gout[i] = 0;
                    continue;
                }
                t[i] = up;
                double fp = value_of(t);
                t[i] = dn;
                double fm = value_of(t);
                t[i] = gg[i];
                gout[i] = (fp - fm) / (up - dn);
            }
            return f0;
        };
        auto polish = opt::box_descent(fd, out.g, pb.cap, std::min<long>(sp.max_iterations, 400),
                                       sp.rel_tol);
        if (polish.value < best) {
            best = polish.value;
            out.g = polish.g;
        }
        out.result.solverIterations = polish.iterations;
    }

    out.result.value = best;
    out.result.solverIterations += evals;
    out.result.errorBound = std::max(out.result.errorBound, child_err);
    if (child_div) {
        out.result.divergent = true;
        out.result.witnessScale = child_witness;
    }
    return out;
}

// --- analytic gradient routes ----------------------------------------------

// Gradient support walks the same recursion as the evaluator but only for
// chains of leaf / Weighted-over-leaf / Ces / Cop / Tan / Cap nodes.
inline bool grad_supported(const SpaceDesc& d, bool is_seq) {
    using N = SpaceDesc::Node;
    switch (d.node) {
        case N::LpLeaf: return !is_seq;
        case N::SeqLeaf: return is_seq;
        case N::Weighted: return d.left->is_leaf() && grad_supported(*d.left, is_seq);
        case N::Ces:
        case N::Cop:
        case N::Tan: return grad_supported(*d.left, is_seq);
        case N::Cap: return grad_supported(*d.left, is_seq) && grad_supported(*d.right, is_seq);
        default: return false;
    }
}

// value + d(value)/d(entries) for sequences; tail_grad = d(value)/d(tail_c).
inline double grad_seq(const SpaceDesc& d, const SeqElem& e, const EvalPolicy& pol,
                       std::vector<double>& grad, double& tail_grad);

// collect weights of a Weighted-chain over a leaf
inline const SpaceDesc& unwrap_weighted(const SpaceDesc& d, std::vector<Weight>& ws) {
    const SpaceDesc* cur = &d;
    while (cur->node == SpaceDesc::Node::Weighted) {
        ws.push_back(*cur->weight);
        cur = cur->left.get();
    }
    if (cur->weight) ws.push_back(*cur->weight);
    return *cur;
}

inline double grad_seq(const SpaceDesc& d, const SeqElem& e, const EvalPolicy& pol,
                       std::vector<double>& grad, double& tail_grad) {
    using N = SpaceDesc::Node;
    const std::size_t n = e.v.size();
    grad.assign(n, 0.0);
    tail_grad = 0.0;
    switch (d.node) {
        case N::SeqLeaf:
        case N::Weighted: {
            std::vector<Weight> ws;
            const SpaceDesc& leaf = unwrap_weighted(d, ws);
            double we = 0;
            for (const Weight& w : ws) we += w.form().e;
            double p = leaf.p;
            NormResult r = leaf_seq_norm(p, ws, e);
            double val = r.value;
            if (p == kInf) {
                // subgradient at the attaining entry
                double m = 0;
                std::size_t arg = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double t = e.v[i] * (we == 0 ? 1.0 : std::pow(double(i + 1), we));
                    if (t > m) {
                        m = t;
                        arg = i;
                    }
                }
                if (n > 0 && m > 0)
                    grad[arg] = (we == 0 ? 1.0 : std::pow(double(arg + 1), we));
                return val;
            }
            if (val == 0) return 0.0;
            double c = std::pow(val, 1.0 - p);
            for (std::size_t i = 0; i < n; ++i) {
                double w = we == 0 ? 1.0 : std::pow(double(i + 1), we);
                double t = e.v[i] * w;
                grad[i] = t == 0 && p > 1 ? 0.0 : c * std::pow(t, p - 1.0) * w;
            }
            if (e.has_tail()) {
                double E = p * (e.tail_e - we);
                auto [lo, hi] = power_tail_bracket(E, double(n));
                if (finite(hi))
                    tail_grad = c * std::pow(e.tail_c, p - 1.0) * 0.5 * (lo + hi);
            }
            return val;
        }
        case N::Ces: {
            // length from the vector, not the support, so the gradient stays
            // consistent while a solver varies the entries
            std::size_t m = std::max<std::size_t>(16, pol.seq_len_factor * std::max<std::size_t>(n, 1));
            SeqElem img;
            img.v.resize(m);
            double run = 0;
            for (std::size_t k = 1; k <= m; ++k) {
                run += k <= n ? e.v[k - 1] : 0.0;
                img.v[k - 1] = run / double(k);
            }
            img.tail_c = run;
            img.tail_e = 1;
            std::vector<double> up;
            double up_tail = 0;
            double val = grad_seq(*d.left, img, pol, up, up_tail);
            // adjoint of the averaging map plus the mass route into the tail
            std::vector<double> suf(m + 1, 0.0);
            for (std::size_t k = m; k >= 1; --k) suf[k - 1] = suf[k] + up[k - 1] / double(k);
            for (std::size_t i = 0; i < n; ++i) grad[i] = suf[i] + up_tail;
            tail_grad = 0.0;  // solver paths materialize input tails first
            return val;
        }
        case N::Cop: {
            std::size_t m = std::max<std::size_t>(n, 1);
            SeqElem img;
            img.v.resize(m, 0.0);
            double tail = 0;
            for (std::size_t k = n; k >= 1; --k) {
                tail += e.v[k - 1] / double(k);
                if (k <= m) img.v[k - 1] = tail;
            }
            std::vector<double> up;
            double up_tail = 0;
            double val = grad_seq(*d.left, img, pol, up, up_tail);
            double prefix = 0;
            for (std::size_t k = 1; k <= n; ++k) {
                prefix += k <= m ? up[k - 1] : 0.0;
                grad[k - 1] = prefix / double(k);
            }
            return val;
        }
        case N::Tan: {
            SeqElem img;
            img.v.resize(n);
            std::vector<std::size_t> arg(n, 0);
            double run = 0;
            std::size_t runarg = n ? n - 1 : 0;
            for (std::size_t i = n; i-- > 0;) {
                if (e.v[i] >= run) {
                    run = e.v[i];
                    runarg = i;
                }
                img.v[i] = run;
                arg[i] = runarg;
            }
            std::vector<double> up;
            double up_tail = 0;
            double val = grad_seq(*d.left, img, pol, up, up_tail);
            for (std::size_t i = 0; i < n; ++i) grad[arg[i]] += up[i];
            return val;
        }
        case N::Cap: {
            std::vector<double> ga, gb;
            double ta = 0, tb = 0;
            double va = grad_seq(*d.left, e, pol, ga, ta);
            double vb = grad_seq(*d.right, e, pol, gb, tb);
            if (va >= vb) {
                grad = ga;
                tail_grad = ta;
                return va;
            }
            grad = gb;
            tail_grad = tb;
            return vb;
        }
        default: throw Error("grad_seq: unsupported node");
    }
}

// function-side gradient: entries are the PC cells of e.f (no tails here,
// solver paths materialize first).
inline double grad_fn(const SpaceDesc& d, const FnElem& e, const EvalPolicy& pol,
                      std::vector<double>& grad);

inline double grad_fn(const SpaceDesc& d, const FnElem& e, const EvalPolicy& pol,
                      std::vector<double>& grad) {
    using N = SpaceDesc::Node;
    const PCFun& f = e.f;
    const std::size_t n = f.cell_count();
    grad.assign(n, 0.0);
    switch (d.node) {
        case N::LpLeaf:
        case N::Weighted: {
            std::vector<Weight> ws;
            const SpaceDesc& leaf = unwrap_weighted(d, ws);
            double p = leaf.p;
            NormResult r = leaf_fn_norm(p, ws, e);
            double val = r.value;
            if (p == kInf) {
                double m = 0;
                std::size_t arg = 0;
                double argw = 1;
                for (std::size_t i = 0; i < n; ++i) {
                    double w = weights_pow_sup(ws, f.xs[i], f.xs[i + 1], 1.0);
                    double t = f.cells[i] * w;
                    if (t > m) {
                        m = t;
                        arg = i;
                        argw = w;
                    }
                }
                if (m > 0) grad[arg] = argw;
                return val;
            }
            if (val == 0) return 0.0;
            double c = std::pow(val, 1.0 - p);
            for (std::size_t i = 0; i < n; ++i) {
                double wi = weights_pow_integral(ws, f.xs[i], f.xs[i + 1], p);
                grad[i] = f.cells[i] == 0 && p > 1
                              ? 0.0
                              : c * std::pow(f.cells[i], p - 1.0) * wi;
            }
            return val;
        }
        case N::Ces: {
            PCFun img = cesaro_fn(f, pol.grid);
            FnElem ie{img, f.domain == Domain::Half ? f.integral_abs() : 0.0, 1};
            std::vector<double> up;
            double val = grad_fn(*d.left, ie, pol, up);
            // d img_j / d v_i = overlap(i, [0,u_j]) / u_j  (left-node samples)
            // suffix sums over output nodes with u_j >= x_{i+1}
            std::size_t m = img.cell_count();
            std::vector<double> suf(m + 1, 0.0);
            for (std::size_t j = m; j-- > 0;) {
                double uj = img.xs[j];
                double w = uj > 0 ? up[j] / uj : 0.0;
                suf[j] = suf[j + 1] + w;
            }
            // but only the tail_c route exists for the analytic tail; approximate
            // the tail as part of the mass derivative when the child consumed it
            for (std::size_t i = 0; i < n; ++i) {
                double xi = f.xs[i], xi1 = f.xs[i + 1];
                // nodes strictly above the cell
                std::size_t j0 = static_cast<std::size_t>(
                    std::lower_bound(img.xs.begin(), img.xs.begin() + long(m), xi1) - img.xs.begin());
                double gsum = (xi1 - xi) * suf[j0];
                // nodes inside the cell
                std::size_t jl = static_cast<std::size_t>(
                    std::upper_bound(img.xs.begin(), img.xs.begin() + long(m), xi) - img.xs.begin());
                for (std::size_t j = jl; j < j0; ++j) {
                    double uj = img.xs[j];
                    if (uj > xi && uj > 0) gsum += up[j] * (uj - xi) / uj;
                }
                grad[i] = gsum;
            }
            return val;
        }
        case N::Cop: {
            PCFun img = copson_fn(f, pol.grid);
            FnElem ie{img, 0, 1};
            std::vector<double> up;
            double val = grad_fn(*d.left, ie, pol, up);
            std::size_t m = img.cell_count();
            // img_j = sum_i v_i ln(x_{i+1}/max(x_i, u_j)) over cells with x_{i+1} > u_j
            std::vector<double> pre(m + 1, 0.0);
            for (std::size_t j = 0; j < m; ++j) pre[j + 1] = pre[j] + up[j];
            for (std::size_t i = 0; i < n; ++i) {
                double xi = f.xs[i], xi1 = f.xs[i + 1];
                // nodes with u_j <= x_i contribute ln(x_{i+1}/x_i)
                std::size_t jhi = static_cast<std::size_t>(
                    std::upper_bound(img.xs.begin(), img.xs.begin() + long(m), xi) - img.xs.begin());
                double gsum = xi > 0 ? pre[jhi] * std::log(xi1 / xi) : (jhi > 0 ? kInf : 0.0);
                if (xi <= 0 && jhi > 0) gsum = pre[jhi] > 0 ? kInf : 0.0;
                // nodes inside (x_i, x_{i+1})
                std::size_t jend = static_cast<std::size_t>(
                    std::lower_bound(img.xs.begin(), img.xs.begin() + long(m), xi1) - img.xs.begin());
                for (std::size_t j = jhi; j < jend; ++j) {
                    double uj = img.xs[j];
                    if (uj > 0 && uj < xi1) gsum += up[j] * std::log(xi1 / uj);
                }
                grad[i] = finite(gsum) ? gsum : 0.0;
            }
            return val;
        }
        case N::Tan: {
            PCFun img = majorant_fn(f);
            std::vector<std::size_t> arg(n, 0);
            {
                double run = 0;
                std::size_t runarg = n ? n - 1 : 0;
                for (std::size_t i = n; i-- > 0;) {
                    if (f.cells[i] >= run) {
                        run = f.cells[i];
                        runarg = i;
                    }
                    arg[i] = runarg;
                }
            }
            FnElem ie{img, 0, 1};
            std::vector<double> up;
            double val = grad_fn(*d.left, ie, pol, up);
            for (std::size_t i = 0; i < n; ++i) grad[arg[i]] += up[i];
            return val;
        }
        case N::Cap: {
            std::vector<double> ga, gb;
            double va = grad_fn(*d.left, e, pol, ga);
            double vb = grad_fn(*d.right, e, pol, gb);
            if (va >= vb) {
                grad = ga;
                return va;
            }
            grad = gb;
            return vb;
        }
        default: throw Error("grad_fn: unsupported node");
    }
}

// --- main recursion ---------------------------------------------------------

inline SumSolveOutcome sum_solve_seq(const SpaceDesc& left, const SpaceDesc& right, SeqElem e,
                                     const EvalPolicy& pol, double tmul, bool use_max) {
    materialize_seq(e, std::max<std::size_t>(e.v.size() * 2, 32));
    BoxNormProblem pb;
    pb.cap = e.v;
    pb.tmul = tmul;
    pb.use_max = use_max;
    pb.norm_left = [&](const std::vector<double>& g) {
        return eval_seq(left, SeqElem{g, 0, 1}, pol);
    };
    pb.norm_right = [&](const std::vector<double>& g) {
        return eval_seq(right, SeqElem{g, 0, 1}, pol);
    };
    if (grad_supported(left, true) && grad_supported(right, true)) {
        pb.grad_left = [&](const std::vector<double>& g, std::vector<double>& gr) {
            double tg;
            return grad_seq(left, SeqElem{g, 0, 1}, pol, gr, tg);
        };
        pb.grad_right = [&](const std::vector<double>& g, std::vector<double>& gr) {
            double tg;
            return grad_seq(right, SeqElem{g, 0, 1}, pol, gr, tg);
        };
    }
    return solve_box_norm(pb, pol.solver, pol.solver_seed);
}

inline SumSolveOutcome sum_solve_fn(const SpaceDesc& left, const SpaceDesc& right, FnElem e,
                                    const EvalPolicy& pol, double tmul, bool use_max) {
    materialize_fn(e, pol.grid);
    BoxNormProblem pb;
    pb.cap = e.f.cells;
    pb.tmul = tmul;
    pb.use_max = use_max;
    Domain dom = e.f.domain;
    std::vector<double> xs = e.f.xs;
    auto mk = [dom, xs](const std::vector<double>& g) { return FnElem{PCFun(dom, xs, g), 0, 1}; };
    pb.norm_left = [&, mk](const std::vector<double>& g) { return eval_fn(left, mk(g), pol); };
    pb.norm_right = [&, mk](const std::vector<double>& g) { return eval_fn(right, mk(g), pol); };
    if (grad_supported(left, false) && grad_supported(right, false)) {
        pb.grad_left = [&, mk](const std::vector<double>& g, std::vector<double>& gr) {
            return grad_fn(left, mk(g), pol, gr);
        };
        pb.grad_right = [&, mk](const std::vector<double>& g, std::vector<double>& gr) {
            return grad_fn(right, mk(g), pol, gr);
        };
    }
    return solve_box_norm(pb, pol.solver, pol.solver_seed);
}

inline NormResult eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol) {
    using N = SpaceDesc::Node;
    switch (d.node) {
        case N::SeqLeaf: {
            std::vector<Weight> ws;
            if (d.weight) ws.push_back(*d.weight);
            return leaf_seq_norm(d.p, ws, e);
        }
        case N::LpLeaf: throw Error("sequence element reached a function leaf");
        case N::Weighted: {
            if (d.left->is_leaf() || d.left->node == N::Weighted) {
                std::vector<Weight> ws;
                const SpaceDesc& leaf = unwrap_weighted(d, ws);
                if (!leaf.is_leaf()) throw Error("weighted chain must end at a leaf");
                return leaf_seq_norm(leaf.p, ws, e);
            }
            if (d.left->node == N::Cap || d.left->node == N::Sum) {
                // (X cap Y)(w) has the same norm as X(w) cap Y(w); likewise Sum
                SpaceDesc pushed = *d.left;
                pushed.left = W(pushed.left, *d.weight);
                pushed.right = W(pushed.right, *d.weight);
                return eval_seq(pushed, std::move(e), pol);
            }
            // multiply the element by the weight (exact pointwise on N)
            double we = d.weight->form().e;
            for (std::size_t i = 0; i < e.v.size(); ++i)
                e.v[i] *= we == 0 ? 1.0 : std::pow(double(i + 1), we);
            if (e.has_tail()) e.tail_e -= we;
            return eval_seq(*d.left, std::move(e), pol);
        }
        case N::Ces: {
            NormResult meta;
            if (e.has_tail()) {
                materialize_seq(e, e.v.size() * 4 + 32);
                meta.errorBound = std::max(meta.errorBound, 1e-3);
            }
            std::size_t sup = std::max<std::size_t>(e.support(), 1);
            std::size_t m = std::max<std::size_t>(16, pol.seq_len_factor * sup);
            SeqElem img;
            img.v.resize(m);
            double run = 0;
            for (std::size_t k = 1; k <= m; ++k) {
                run += k <= e.v.size() ? e.v[k - 1] : 0.0;
                img.v[k - 1] = run / double(k);
            }
            img.tail_c = run;
            img.tail_e = 1;
            NormResult r = eval_seq(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Cop: {
            NormResult meta;
            if (e.has_tail()) {
                materialize_seq(e, e.v.size() * 4 + 32);
                meta.errorBound = std::max(meta.errorBound, 1e-3);
            }
            std::size_t m = std::max<std::size_t>(e.v.size(), 1);
            SeqElem img;
            img.v.resize(m, 0.0);
            double tail = 0;
            for (std::size_t k = e.support(); k >= 1; --k) {
                tail += e.v[k - 1] / double(k);
                if (k <= m) img.v[k - 1] = tail;
            }
            NormResult r = eval_seq(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Tan: {
            SeqElem img;
            img.v.resize(e.v.size());
            NormResult meta;
            double run = 0;
            if (e.has_tail()) {
                if (e.tail_e < 0) {
                    meta.divergent = true;
                    meta.witnessScale = double(e.v.size());
                }
                run = e.tail_c * std::pow(double(e.v.size() + 1), -e.tail_e);
                img.tail_c = e.tail_c;
                img.tail_e = e.tail_e;
            }
            for (std::size_t i = e.v.size(); i-- > 0;) {
                run = std::max(run, e.v[i]);
                img.v[i] = run;
            }
            NormResult r = eval_seq(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Cap: {
            NormResult a = eval_seq(*d.left, e, pol);
            NormResult b = eval_seq(*d.right, e, pol);
            NormResult r;
            r.value = std::max(a.value, b.value);
            r.absorb_meta(a);
            r.absorb_meta(b);
            return r;
        }
        case N::Sum: {
            auto out = sum_solve_seq(*d.left, *d.right, std::move(e), pol, 1.0, false);
            return out.result;
        }
        case N::CL: return cl_eval_seq(d, std::move(e), pol);
        case N::RealK: return realk_eval_seq(d, std::move(e), pol);
    }
    throw Error("eval_seq: bad node");
}

// exact prefix/suffix evaluation including the analytic tail
inline double elem_prefix_at(const FnElem& e, const FnCalc& c, double x) {
    double s = c.prefix_at(x);
    if (e.has_tail() && x > e.f.end()) {
        double E = e.f.end();
        if (e.tail_e == 1)
            s += e.tail_c * std::log(x / E);
        else
            s += e.tail_c * (std::pow(x, 1 - e.tail_e) - std::pow(E, 1 - e.tail_e)) / (1 - e.tail_e);
    }
    return s;
}

inline double elem_mass(const FnElem& e, const FnCalc& c, double upto) {
    return elem_prefix_at(e, c, upto);
}

inline NormResult eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol) {
    using N = SpaceDesc::Node;
    switch (d.node) {
        case N::LpLeaf: {
            std::vector<Weight> ws;
            if (d.weight) ws.push_back(*d.weight);
            return leaf_fn_norm(d.p, ws, e);
        }
        case N::SeqLeaf: throw Error("function element reached a sequence leaf");
        case N::Weighted: {
            if (d.left->is_leaf() || d.left->node == N::Weighted) {
                std::vector<Weight> ws;
                const SpaceDesc& leaf = unwrap_weighted(d, ws);
                if (!leaf.is_leaf()) throw Error("weighted chain must end at a leaf");
                return leaf_fn_norm(leaf.p, ws, e);
            }
            if (d.left->node == N::Cap || d.left->node == N::Sum) {
                SpaceDesc pushed = *d.left;
                pushed.left = W(pushed.left, *d.weight);
                pushed.right = W(pushed.right, *d.weight);
                return eval_fn(pushed, std::move(e), pol);
            }
            // sample the weight at geometric cell midpoints on a refined grid
            PCFun r = refined(e.f, 2);
            for (std::size_t i = 0; i < r.cell_count(); ++i) {
                double a = r.xs[i], b = r.xs[i + 1];
                double mid = a > 0 ? std::sqrt(a * b) : 0.5 * (a + b);
                r.cells[i] *= d.weight->value(mid);
            }
            NormResult meta;
            meta.errorBound = 1e-3;  // sampled-product path, grid-level accuracy
            FnElem img{std::move(r), 0, 1};
            if (e.has_tail()) {
                auto fm = d.weight->form();
                if (fm.base == Weight::Form::Base::PowX) {
                    img.tail_c = e.tail_c;
                    img.tail_e = e.tail_e - fm.e;
                }
            }
            NormResult res = eval_fn(*d.left, std::move(img), pol);
            res.absorb_meta(meta);
            return res;
        }
        case N::Ces: {
            FnCalc c(e.f);
            auto xs = image_grid(e.f, pol.grid, true, false);
            NormResult meta;
            std::vector<double> cells(xs.size() - 1);
            for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
                double x = xs[i];
                double v;
                if (x == 0)
                    v = e.f.start() == 0 ? std::fabs(e.f.cells.front()) : 0.0;
                else
                    v = elem_prefix_at(e, c, x) / x;
                if (!finite(v)) v = elem_prefix_at(e, c, xs[i + 1]) / xs[i + 1];
                cells[i] = v;
            }
            FnElem img{PCFun(e.f.domain, xs, std::move(cells)), 0, 1};
            if (e.f.domain == Domain::Half) {
                if (!e.has_tail()) {
                    img.tail_c = c.mass();
                    img.tail_e = 1;
                } else if (e.tail_e > 1) {
                    img.tail_c = elem_mass(e, c, kInf);
                    img.tail_e = 1;
                    meta.errorBound = std::max(meta.errorBound, 1e-6);
                } else {
                    meta.errorBound = std::max(meta.errorBound, 1e-3);  // truncated
                }
            }
            NormResult r = eval_fn(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Cop: {
            FnCalc c(e.f);
            auto xs = image_grid(e.f, pol.grid, false, true);
            NormResult meta;
            if (e.has_tail() && e.tail_e <= 0) {
                meta.divergent = true;
                meta.witnessScale = e.f.end();
            }
            auto tail_part = [&](double x) {
                if (!e.has_tail() || e.tail_e <= 0) return 0.0;
                double base = std::max(x, e.f.end());
                return e.tail_c * std::pow(base, -e.tail_e) / e.tail_e;
            };
            std::vector<double> cells(xs.size() - 1);
            for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
                double v = c.suffix_log_at(xs[i]) + tail_part(xs[i]);
                if (!finite(v)) v = c.suffix_log_at(xs[i + 1]) + tail_part(xs[i + 1]);
                cells[i] = v;
            }
            FnElem img{PCFun(e.f.domain, xs, std::move(cells)), 0, 1};
            if (e.has_tail() && e.tail_e > 0) {
                img.tail_c = e.tail_c / e.tail_e;
                img.tail_e = e.tail_e;
            }
            NormResult r = eval_fn(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Tan: {
            NormResult meta;
            double run = 0;
            if (e.has_tail()) {
                if (e.tail_e < 0) {
                    meta.divergent = true;
                    meta.witnessScale = e.f.end();
                }
                run = e.tail_c * std::pow(e.f.end(), -e.tail_e);
            }
            std::vector<double> out(e.f.cell_count());
            for (std::size_t i = e.f.cell_count(); i-- > 0;) {
                run = std::max(run, std::fabs(e.f.cells[i]));
                out[i] = run;
            }
            FnElem img{PCFun(e.f.domain, e.f.xs, std::move(out)), e.tail_c, e.tail_e};
            NormResult r = eval_fn(*d.left, std::move(img), pol);
            r.absorb_meta(meta);
            return r;
        }
        case N::Cap: {
            NormResult a = eval_fn(*d.left, e, pol);
            NormResult b = eval_fn(*d.right, e, pol);
            NormResult r;
            r.value = std::max(a.value, b.value);
            r.absorb_meta(a);
            r.absorb_meta(b);
            return r;
        }
        case N::Sum: {
            auto out = sum_solve_fn(*d.left, *d.right, std::move(e), pol, 1.0, false);
            return out.result;
        }
        case N::CL: return cl_eval_fn(d, std::move(e), pol);
        case N::RealK: return realk_eval_fn(d, std::move(e), pol);
    }
    throw Error("eval_fn: bad node");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// public entry points
// ---------------------------------------------------------------------------

inline NormResult norm(const SpaceDesc& space, const Seq& x, const EvalPolicy& pol = {}) {
    validate_element(space, Element{x});
    return detail::eval_seq(space, detail::make_seq_elem(x), pol);
}

inline NormResult norm(const SpaceDesc& space, const PCFun& x, const EvalPolicy& pol = {}) {
    validate_element(space, Element{x});
    return detail::eval_fn(space, detail::make_fn_elem(x), pol);
}

inline NormResult norm(const SpaceDesc& space, const Element& x, const EvalPolicy& pol = {}) {
    if (std::holds_alternative<Seq>(x)) return norm(space, std::get<Seq>(x), pol);
    return norm(space, std::get<PCFun>(x), pol);
}

inline NormResult norm(const SpacePtr& space, const Element& x, const EvalPolicy& pol = {}) {
    return norm(*space, x, pol);
}

// inf over 0 <= g <= |x| of ||g||_left + || |x|-g ||_right, with the achieved
// decomposition (g is the left part).
struct SumNormOutcome {
    NormResult result;
    Element left_part;
};

inline SumNormOutcome sum_norm(const SpacePtr& left, const SpacePtr& right, const Element& x,
                               const EvalPolicy& pol = {}) {
    MeasureSpace ml = measure_space(*left), mr = measure_space(*right);
    if (!(ml == mr)) throw Error("sum_norm: children live on different measure spaces");
    if (std::holds_alternative<Seq>(x)) {
        validate_element(*left, x);
        auto out = detail::sum_solve_seq(*left, *right, detail::make_seq_elem(std::get<Seq>(x)),
                                         pol, 1.0, false);
        return {out.result, Element{Seq(out.g)}};
    }
    validate_element(*left, x);
    const PCFun& f = std::get<PCFun>(x);
    detail::FnElem e = detail::make_fn_elem(f);
    detail::materialize_fn(e, pol.grid);
    auto out = detail::sum_solve_fn(*left, *right, e, pol, 1.0, false);
    return {out.result, Element{PCFun(e.f.domain, e.f.xs, out.g)}};
}

// Analytic tail correction for a weighted lp leaf: the element is `partial`
// up to N and massBeyond/n beyond. p = 1 with mass diverges (flagged).
inline NormResult lp_tail(const SpaceDesc& leaf, const Seq& partial, double massBeyond,
                          const EvalPolicy& pol = {}) {
    if (leaf.node != SpaceDesc::Node::SeqLeaf) throw Error("lp_tail: expected an lp leaf");
    detail::SeqElem e = detail::make_seq_elem(partial);
    e.tail_c = massBeyond;
    e.tail_e = 1;
    (void)pol;
    std::vector<Weight> ws;
    if (leaf.weight) ws.push_back(*leaf.weight);
    return detail::leaf_seq_norm(leaf.p, ws, e);
}

}  // namespace ceslab
