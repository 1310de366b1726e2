#pragma once
// Calderon-Lozanovskii norms, Peetre K-functionals, K-profiles and the real
// (theta,q) interpolation method.
//
// The power-CL solver uses the factor parametrization f0 = |f| e^{theta u},
// f1 = |f| e^{-(1-theta) u}, which keeps f0^{1-theta} f1^{theta} = |f|
// identically. After the optimal constant shift the max of the two norms
// equals N0^{1-theta} N1^{theta}, a shift-invariant convex functional of u,
// minimized by descent with backtracking.

#include "ceslab/duality.hpp"
#include "ceslab/norm.hpp"

namespace ceslab {

namespace detail {

// entry-level view shared by the sequence and function cases
struct ClCtx {
    std::vector<double> f;  // nonnegative entries
    std::function<NormResult(const std::vector<double>&)> normL, normR;
    std::function<double(const std::vector<double>&, std::vector<double>&)> gradL, gradR;
    bool has_grad = false;
};

inline NormResult cl_power_solve(const ClCtx& cx, double theta, const SolverPolicy& sp) {
    const std::size_t n = cx.f.size();
    NormResult out;
    long evals = 0;
    bool divergent = false;
    double witness = 0;

    std::vector<double> h0(n), h1(n);
    auto eval_pair = [&](const std::vector<double>& u, NormResult& A, NormResult& B) {
        for (std::size_t i = 0; i < n; ++i) {
            h0[i] = cx.f[i] * std::exp(theta * u[i]);
            h1[i] = cx.f[i] * std::exp(-(1.0 - theta) * u[i]);
        }
        A = cx.normL(h0);
        B = cx.normR(h1);
        ++evals;
        if (A.divergent || B.divergent) {
            divergent = true;
            witness = A.divergent ? A.witnessScale : B.witnessScale;
        }
    };
    // shift-equalized objective: min over c of max(A e^{theta c}, B e^{-(1-theta)c})
    auto geo = [&](double A, double B) {
        if (A == 0 || B == 0) return 0.0;
        return std::pow(A, 1.0 - theta) * std::pow(B, theta);
    };

    std::vector<double> u(n, 0.0), trial(n), grad(n);
    NormResult A, B;
    eval_pair(u, A, B);
    double val = geo(A.value, B.value);
    double best = val;
    std::vector<double> ubest = u;

    std::vector<double> g0(n), g1(n);
    double step = 1.0;
    long it = 0;
    int stall = 0;
    for (; it < sp.cl_max_iterations && stall < 10; ++it) {
        // gradient of log(A^{1-theta} B^{theta})
        double Av, Bv;
        if (cx.has_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                h0[i] = cx.f[i] * std::exp(theta * u[i]);
                h1[i] = cx.f[i] * std::exp(-(1.0 - theta) * u[i]);
            }
            Av = cx.gradL(h0, g0);
            Bv = cx.gradR(h1, g1);
            ++evals;
            if (!(Av > 0) || !(Bv > 0)) break;
            for (std::size_t i = 0; i < n; ++i) {
                if (cx.f[i] == 0) {
                    grad[i] = 0;
                    continue;
                }
                double dA = g0[i] * h0[i] * theta;
                double dB = -g1[i] * h1[i] * (1.0 - theta);
                grad[i] = (1.0 - theta) * dA / Av + theta * dB / Bv;
            }
        } else {
            NormResult A2, B2;
            eval_pair(u, A2, B2);
            Av = A2.value;
            Bv = B2.value;
            if (!(Av > 0) || !(Bv > 0)) break;
            double f0 = std::log(geo(Av, Bv));
            const double hstep = 1e-6;
            for (std::size_t i = 0; i < n; ++i) {
                if (cx.f[i] == 0) {
                    grad[i] = 0;
                    continue;
                }
                trial = u;
                trial[i] += hstep;
                NormResult At, Bt;
                eval_pair(trial, At, Bt);
                grad[i] = (std::log(geo(At.value, Bt.value)) - f0) / hstep;
            }
        }
        double gn = 0;
        for (double x : grad) gn = std::max(gn, std::fabs(x));
        if (gn < 1e-10) break;

        bool improved = false;
        double s = step;
        for (int bt = 0; bt < 30; ++bt) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] - s * grad[i];
            NormResult At, Bt;
            eval_pair(trial, At, Bt);
            double vt = geo(At.value, Bt.value);
            if (vt < val * (1 - 1e-14)) {
                bool big = (val - vt) > sp.cl_gap_tol * 1e-3 * val;
                u = trial;
                val = vt;
                A = At;
                B = Bt;
                if (val < best) {
                    best = val;
                    ubest = u;
                }
                step = s * 2;
                stall = big ? 0 : stall + 1;
                improved = true;
                break;
            }
            s *= 0.25;
        }
        if (!improved) {
            ++stall;
            step *= 0.25;
            if (step < 1e-200) break;
        }
    }

    out.value = best;
    out.solverIterations = evals;
    out.divergent = divergent;
    out.witnessScale = witness;
    if (it >= sp.cl_max_iterations) out.errorBound = std::max(out.errorBound, sp.cl_gap_tol);
    return out;
}

// phi = sum: inf over f = f0 + f1 of max(||f0||, ||f1||)
inline NormResult cl_sum_solve(const ClCtx& cx, const SolverPolicy& sp, std::uint64_t seed) {
    BoxNormProblem pb;
    pb.cap = cx.f;
    pb.tmul = 1.0;
    pb.use_max = true;
    pb.norm_left = cx.normL;
    pb.norm_right = cx.normR;
    if (cx.has_grad) {
        pb.grad_left = cx.gradL;
        pb.grad_right = cx.gradR;
    }
    return solve_box_norm(pb, sp, seed).result;
}

// phi = max: |f| <= max(f0, f1) splits the carrier; search indicator splits
// (sorted-threshold seeds plus local flips).
inline NormResult cl_max_solve(const ClCtx& cx, const SolverPolicy& sp) {
    const std::size_t n = cx.f.size();
    NormResult out;
    long evals = 0;
    std::vector<double> a(n), b(n);
    auto value_of = [&](const std::vector<char>& in_left) {
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = in_left[i] ? cx.f[i] : 0.0;
            b[i] = in_left[i] ? 0.0 : cx.f[i];
        }
        ++evals;
        return std::max(cx.normL(a).value, cx.normR(b).value);
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return cx.f[i] > cx.f[j]; });

    std::vector<char> best_set(n, 1);
    double best = value_of(best_set);
    auto consider = [&](const std::vector<char>& s) {
        double v = value_of(s);
        if (v < best) {
            best = v;
            best_set = s;
        }
    };
    std::vector<char> s(n, 0);
    consider(s);
    for (std::size_t k = 0; k < n; ++k) {  // top-k by magnitude to the left
        s.assign(n, 0);
        for (std::size_t j = 0; j <= k; ++j) s[order[j]] = 1;
        consider(s);
        for (std::size_t j = 0; j < n; ++j) s[j] = !s[j];
        consider(s);
    }
    // local flips
    bool moved = true;
    long rounds = 0;
    const long round_cap = sp.max_iterations / static_cast<long>(std::max<std::size_t>(n, 1)) + 2;
    while (moved && rounds++ < round_cap) {
        moved = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<char> t = best_set;
            t[i] = !t[i];
            double v = value_of(t);
            if (v < best * (1 - 1e-14)) {
                best = v;
                best_set = t;
                moved = true;
            }
        }
    }
    out.value = best;
    out.solverIterations = evals;
    return out;
}

inline ClCtx make_cl_ctx_seq(const SpaceDesc& left, const SpaceDesc& right, SeqElem e,
                             const EvalPolicy& pol) {
    materialize_seq(e, e.v.size() * 2 + 16);
    ClCtx cx;
    cx.f = e.v;
    cx.normL = [&left, &pol](const std::vector<double>& g) {
        return eval_seq(left, SeqElem{g, 0, 1}, pol);
    };
    cx.normR = [&right, &pol](const std::vector<double>& g) {
        return eval_seq(right, SeqElem{g, 0, 1}, pol);
    };
    if (grad_supported(left, true) && grad_supported(right, true)) {
        cx.has_grad = true;
        cx.gradL = [&left, &pol](const std::vector<double>& g, std::vector<double>& gr) {
            double tg;
            return grad_seq(left, SeqElem{g, 0, 1}, pol, gr, tg);
        };
        cx.gradR = [&right, &pol](const std::vector<double>& g, std::vector<double>& gr) {
            double tg;
            return grad_seq(right, SeqElem{g, 0, 1}, pol, gr, tg);
        };
    }
    return cx;
}

inline ClCtx make_cl_ctx_fn(const SpaceDesc& left, const SpaceDesc& right, FnElem e,
                            const EvalPolicy& pol, PCFun& grid_out) {
    materialize_fn(e, pol.grid);
    grid_out = e.f;
    ClCtx cx;
    cx.f = e.f.cells;
    Domain dom = e.f.domain;
    std::vector<double> xs = e.f.xs;
    cx.normL = [&left, &pol, dom, xs](const std::vector<double>& g) {
        return eval_fn(left, FnElem{PCFun(dom, xs, g), 0, 1}, pol);
    };
    cx.normR = [&right, &pol, dom, xs](const std::vector<double>& g) {
        return eval_fn(right, FnElem{PCFun(dom, xs, g), 0, 1}, pol);
    };
    if (grad_supported(left, false) && grad_supported(right, false)) {
        cx.has_grad = true;
        cx.gradL = [&left, &pol, dom, xs](const std::vector<double>& g, std::vector<double>& gr) {
            return grad_fn(left, FnElem{PCFun(dom, xs, g), 0, 1}, pol, gr);
        };
        cx.gradR = [&right, &pol, dom, xs](const std::vector<double>& g, std::vector<double>& gr) {
            return grad_fn(right, FnElem{PCFun(dom, xs, g), 0, 1}, pol, gr);
        };
    }
    return cx;
}

inline NormResult cl_dispatch(const PhiDesc& phi, ClCtx& cx, const EvalPolicy& pol,
                              NormResult direct_l, NormResult direct_r, bool have_direct) {
    using K = PhiDesc::Kind;
    switch (phi.kind) {
        case K::Min: {
            // optimal factors are f itself on both sides
            NormResult r;
            if (have_direct) {
                r.value = std::max(direct_l.value, direct_r.value);
                r.absorb_meta(direct_l);
                r.absorb_meta(direct_r);
            } else {
                NormResult a = cx.normL(cx.f), b = cx.normR(cx.f);
                r.value = std::max(a.value, b.value);
                r.absorb_meta(a);
                r.absorb_meta(b);
            }
            return r;
        }
        case K::Power: {
            if (phi.theta == 0) return cx.normL(cx.f);
            if (phi.theta == 1) return cx.normR(cx.f);
            return cl_power_solve(cx, phi.theta, pol.solver);
        }
        case K::Sum: return cl_sum_solve(cx, pol.solver, pol.solver_seed);
        case K::Max: return cl_max_solve(cx, pol.solver);
    }
    throw Error("cl_dispatch: bad phi");
}

inline NormResult cl_eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol) {
    ClCtx cx = make_cl_ctx_seq(*d.left, *d.right, std::move(e), pol);
    return cl_dispatch(d.phi, cx, pol, {}, {}, false);
}

inline NormResult cl_eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol) {
    PCFun grid;
    ClCtx cx = make_cl_ctx_fn(*d.left, *d.right, std::move(e), pol, grid);
    return cl_dispatch(d.phi, cx, pol, {}, {}, false);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// cl_norm: public entry
// ---------------------------------------------------------------------------

inline NormResult cl_norm(const PhiDesc& phi, const SpacePtr& left, const SpacePtr& right,
                          const Element& f, const EvalPolicy& pol = {}) {
    MeasureSpace ml = measure_space(*left), mr = measure_space(*right);
    if (!(ml == mr)) throw Error("cl_norm: children live on different measure spaces");
    validate_element(*left, f);
    if (std::holds_alternative<Seq>(f))
        return detail::cl_eval_seq(*CL(phi, left, right), detail::make_seq_elem(std::get<Seq>(f)),
                                   pol);
    return detail::cl_eval_fn(*CL(phi, left, right), detail::make_fn_elem(std::get<PCFun>(f)), pol);
}

// ---------------------------------------------------------------------------
// K-functionals
// ---------------------------------------------------------------------------

// Exact K(t, f; L1(w0), L1(w1)) = int min(w0, t w1) |f|, splitting each cell
// at the crossover of w0 and t*w1 (the weight ratio is monotone per cell for
// every analytic weight kind here).
inline double k_exact_weightedL1(double t, const PCFun& f, const Weight& w0, const Weight& w1) {
    if (!(t > 0)) throw Error("k_exact_weightedL1: t must be positive");
    double total = 0;
    auto diff = [&](double x) { return w0.value(x) - t * w1.value(x); };
    for (std::size_t i = 0; i < f.cell_count(); ++i) {
        double v = std::fabs(f.cells[i]);
        if (v == 0) continue;
        double a = f.xs[i], b = f.xs[i + 1];
        double ia = std::nextafter(a, b), ib = std::nextafter(b, a);
        double da = diff(ia), db = diff(ib);
        auto seg = [&](double lo, double hi, bool take0) {
            return v * (take0 ? w0.pow_integral(lo, hi, 1.0)
                              : t * w1.pow_integral(lo, hi, 1.0));
        };
        if (da <= 0 && db <= 0) {
            total += seg(a, b, true);
        } else if (da >= 0 && db >= 0) {
            total += seg(a, b, false);
        } else {
            double lo = ia, hi = ib;
            bool lo_neg = da < 0;
            for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++it) {
                double mid = 0.5 * (lo + hi);
                if ((diff(mid) < 0) == lo_neg)
                    lo = mid;
                else
                    hi = mid;
            }
            double cross = 0.5 * (lo + hi);
            total += seg(a, cross, lo_neg) + seg(cross, b, !lo_neg);
        }
    }
    return total;
}

namespace detail {

// Weighted-L1 leaf chain: true when the descriptor is L1 with only power /
// oneminus / sampled weights stacked on top, collecting the product.
inline bool weighted_l1_chain(const SpaceDesc& d, std::vector<Weight>& ws) {
    const SpaceDesc* cur = &d;
    while (cur->node == SpaceDesc::Node::Weighted) {
        ws.push_back(*cur->weight);
        cur = cur->left.get();
    }
    if (cur->node != SpaceDesc::Node::LpLeaf || cur->p != 1.0) return false;
    if (cur->weight) ws.push_back(*cur->weight);
    return true;
}

inline double weights_value(const std::vector<Weight>& ws, double x) {
    double v = 1;
    for (const Weight& w : ws) v *= w.value(x);
    return v;
}

}  // namespace detail

// Box-constrained K(t): inf over 0 <= g <= |f| of ||g||_left + t ||f-g||_right.
// For weighted-L1 couples the crossover points of w0 = t*w1 are inserted into
// the grid first (pure refinement), which makes the cellwise optimum exact.
inline NormResult k_numeric(double t, const Element& f, const SpacePtr& left,
                            const SpacePtr& right, const EvalPolicy& pol = {}) {
    if (!(t > 0)) throw Error("k_numeric: t must be positive");
    if (std::holds_alternative<Seq>(f)) {
        auto out = detail::sum_solve_seq(*left, *right,
                                         detail::make_seq_elem(std::get<Seq>(f)), pol, t, false);
        return out.result;
    }
    PCFun fn = std::get<PCFun>(f).abs();
    std::vector<Weight> ws0, ws1;
    if (detail::weighted_l1_chain(*left, ws0) && detail::weighted_l1_chain(*right, ws1)) {
        // insert crossovers of prod(ws0) = t * prod(ws1)
        auto diff = [&](double x) {
            return detail::weights_value(ws0, x) - t * detail::weights_value(ws1, x);
        };
        std::vector<double> xs = fn.xs;
        for (std::size_t i = 0; i + 1 < fn.xs.size(); ++i) {
            double a = fn.xs[i], b = fn.xs[i + 1];
            double ia = std::nextafter(a, b), ib = std::nextafter(b, a);
            double da = diff(ia), db = diff(ib);
            if ((da < 0) != (db < 0)) {
                double lo = ia, hi = ib;
                bool lo_neg = da < 0;
                for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++it) {
                    double mid = 0.5 * (lo + hi);
                    if ((diff(mid) < 0) == lo_neg)
                        lo = mid;
                    else
                        hi = mid;
                }
                double cross = 0.5 * (lo + hi);
                if (cross > a && cross < b) xs.push_back(cross);
            }
        }
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        std::vector<double> cells(xs.size() - 1);
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) cells[i] = fn.value_at(xs[i]);
        fn = PCFun(fn.domain, std::move(xs), std::move(cells));
    }
    auto out = detail::sum_solve_fn(*left, *right, detail::make_fn_elem(fn), pol, t, false);
    return out.result;
}

// ---------------------------------------------------------------------------
// KProfile
// ---------------------------------------------------------------------------

struct KProfile {
    std::vector<double> tGrid;
    std::vector<double> kValues;
    // fitted power-law tails K ~ c t^m over the outermost fit window
    double c0 = 0, m0 = 1;      // t -> 0
    double cInf = 0, mInf = 0;  // t -> inf
    bool solver_flagged = false;
    long solverIterations = 0;

    bool nondecreasing(double tol = 1e-12) const {
        for (std::size_t i = 0; i + 1 < kValues.size(); ++i)
            if (kValues[i + 1] < kValues[i] * (1 - tol) - tol) return false;
        return true;
    }
    bool k_over_t_nonincreasing(double tol = 1e-12) const {
        for (std::size_t i = 0; i + 1 < kValues.size(); ++i) {
            double a = kValues[i] / tGrid[i], b = kValues[i + 1] / tGrid[i + 1];
            if (b > a * (1 + tol) + tol) return false;
        }
        return true;
    }
    bool concave(double tol = 1e-12) const {
        for (std::size_t i = 0; i + 2 < kValues.size(); ++i) {
            double lam = (tGrid[i + 1] - tGrid[i]) / (tGrid[i + 2] - tGrid[i]);
            double chord = (1 - lam) * kValues[i] + lam * kValues[i + 2];
            double scale = std::max({kValues[i], kValues[i + 2], 1e-300});
            if (kValues[i + 1] < chord - tol * scale) return false;
        }
        return true;
    }
};

inline KProfile k_profile(const Element& f, const SpacePtr& left, const SpacePtr& right,
                          double tMin, double tMax, std::size_t points,
                          const EvalPolicy& pol = {}) {
    if (!(tMin > 0 && tMax > tMin)) throw Error("k_profile: need 0 < tMin < tMax");
    if (points < 2) throw Error("k_profile: need at least 2 points");
    KProfile prof;
    prof.tGrid.resize(points);
    prof.kValues.resize(points);
    for (std::size_t i = 0; i < points; ++i)
        prof.tGrid[i] = std::exp(std::log(tMin) +
                                 (std::log(tMax) - std::log(tMin)) * double(i) / double(points - 1));

    std::vector<Weight> ws0, ws1;
    bool exact = std::holds_alternative<PCFun>(f) && detail::weighted_l1_chain(*left, ws0) &&
                 detail::weighted_l1_chain(*right, ws1) && ws0.size() <= 1 && ws1.size() <= 1;
    Weight w0 = ws0.empty() ? Weight::one() : ws0.front();
    Weight w1 = ws1.empty() ? Weight::one() : ws1.front();

    for (std::size_t i = 0; i < points; ++i) {
        if (exact) {
            prof.kValues[i] = k_exact_weightedL1(prof.tGrid[i], std::get<PCFun>(f), w0, w1);
        } else {
            NormResult r = k_numeric(prof.tGrid[i], f, left, right, pol);
            prof.kValues[i] = r.value;
            prof.solverIterations += r.solverIterations;
            if (r.divergent || r.errorBound > 1e-2) prof.solver_flagged = true;
        }
    }

    // power-law fit over the outermost window (least squares in log-log)
    auto fit = [&](std::size_t from, std::size_t count, double& c, double& m) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::size_t used = 0;
        for (std::size_t i = from; i < from + count; ++i) {
            if (!(prof.kValues[i] > 0)) continue;
            double x = std::log(prof.tGrid[i]), y = std::log(prof.kValues[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++used;
        }
        if (used < 2) {
            c = 0;
            m = 0;
            return;
        }
        double du = double(used);
        double denom = du * sxx - sx * sx;
        m = denom != 0 ? (du * sxy - sx * sy) / denom : 0.0;
        c = std::exp((sy - m * sx) / du);
    };
    std::size_t win = std::min<std::size_t>(8, points / 2 ? points / 2 : 1);
    fit(0, win, prof.c0, prof.m0);
    fit(points - win, win, prof.cInf, prof.mInf);
    return prof;
}

// ---------------------------------------------------------------------------
// real method: || t^{-theta} K(t) ||_{L^q(dt/t)} over the profile grid plus
// analytic power-law tails.
// ---------------------------------------------------------------------------

inline NormResult real_interp_from_profile(const KProfile& prof, double theta, double q) {
    if (!(theta > 0 && theta < 1)) throw Error("real method: theta must lie in (0,1)");
    NormResult out;
    const auto& T = prof.tGrid;
    const auto& K = prof.kValues;
    const std::size_t n = T.size();
    if (prof.solver_flagged) out.errorBound = std::max(out.errorBound, 1e-2);

    if (q == kInf) {
        double m = 0;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::pow(T[i], -theta) * K[i]);
        if (prof.m0 < theta - 1e-9 && prof.c0 > 0) {
            out.divergent = true;
            out.witnessScale = T.front();
        }
        if (prof.mInf > theta + 1e-9 && prof.cInf > 0) {
            out.divergent = true;
            out.witnessScale = T.back();
        }
        out.value = m;
        return out;
    }

    double I = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(K[i] > 0) || !(K[i + 1] > 0)) continue;
        double du = std::log(T[i + 1] / T[i]);
        double m = std::log(K[i + 1] / K[i]) / du;  // local power-law exponent
        double base = std::pow(std::pow(T[i], -theta) * K[i], q);
        double r = q * (m - theta);
        I += std::fabs(r * du) < 1e-12 ? base * du : base * (std::expm1(r * du)) / r;
    }
    // tails
    if (K.front() > 0) {
        double r0 = q * (prof.m0 - theta);
        double base = std::pow(std::pow(T.front(), -theta) * K.front(), q);
        if (r0 > 1e-9) {
            I += base / r0;
        } else {
            out.divergent = true;
            out.witnessScale = T.front();
        }
    }
    if (K.back() > 0) {
        double ri = q * (theta - prof.mInf);
        double base = std::pow(std::pow(T.back(), -theta) * K.back(), q);
        if (ri > 1e-9) {
            I += base / ri;
        } else {
            out.divergent = true;
            out.witnessScale = T.back();
        }
    }
    out.value = std::pow(I, 1.0 / q);
    out.solverIterations = prof.solverIterations;
    return out;
}

struct RealMethodParams {
    double tMin = 1e-4, tMax = 1e4;
    std::size_t points = 64;
};

inline NormResult real_interp_norm(const Element& f, const SpacePtr& left, const SpacePtr& right,
                                   double theta, double q, const EvalPolicy& pol = {},
                                   const RealMethodParams& rp = {}) {
    KProfile prof = k_profile(f, left, right, rp.tMin, rp.tMax, rp.points, pol);
    return real_interp_from_profile(prof, theta, q);
}

namespace detail {

inline NormResult realk_eval_seq(const SpaceDesc& d, SeqElem e, const EvalPolicy& pol) {
    materialize_seq(e, e.v.size() * 2 + 16);
    std::vector<double> v = e.v;
    Seq a(std::move(v));
    return real_interp_norm(Element{a}, d.left, d.right, d.theta, d.q, pol);
}

inline NormResult realk_eval_fn(const SpaceDesc& d, FnElem e, const EvalPolicy& pol) {
    materialize_fn(e, pol.grid);
    return real_interp_norm(Element{e.f}, d.left, d.right, d.theta, d.q, pol);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The averaging kernel S f(t) = int_0^inf min(1, t/s) f(s) ds/s, evaluated
// exactly at grid nodes; returns ||Sf|| / ||f|| in the given weighted space.
// ---------------------------------------------------------------------------

inline PCFun s_operator_fn(const PCFun& f, const GridPolicy& gp = {}) {
    if (f.domain != Domain::Half) throw Error("s_operator_fn: half-line only");
    auto sf_at = [&](double t) {
        double s = 0;
        for (std::size_t i = 0; i < f.cell_count(); ++i) {
            double v = std::fabs(f.cells[i]);
            if (v == 0) continue;
            double a = f.xs[i], b = f.xs[i + 1];
            // s <= t: integrand v/s ; s >= t: integrand v t / s^2
            double lo = a, mid = std::clamp(t, a, b), hi = b;
            if (mid > lo && lo > 0) s += v * std::log(mid / lo);
            if (hi > mid && mid > 0) s += v * t * (1.0 / mid - 1.0 / hi);
        }
        return s;
    };
    std::vector<double> xs = refined(f, 2).xs;
    if (xs.front() > gp.eps) {
        auto ext = log_grid(gp.eps, xs.front(), 24);
        xs.insert(xs.begin(), ext.begin(), ext.end() - 1);
    }
    if (xs.back() < gp.tmax) {
        auto ext = log_grid(xs.back(), gp.tmax, 48);
        xs.insert(xs.end(), ext.begin() + 1, ext.end());
    }
    std::vector<double> cells(xs.size() - 1);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        double t = xs[i] > 0 ? std::sqrt(xs[i] * xs[i + 1]) : xs[i + 1];
        cells[i] = sf_at(t);
    }
    return PCFun(Domain::Half, std::move(xs), std::move(cells));
}

inline double check_S_bounded(const PCFun& x, const SpacePtr& weighted_space,
                              const EvalPolicy& pol = {}) {
    PCFun sf = s_operator_fn(x, pol.grid);
    double num = norm(*weighted_space, sf, pol).value;
    double den = norm(*weighted_space, x, pol).value;
    if (den == 0) return 0;
    return num / den;
}

}  // namespace ceslab
