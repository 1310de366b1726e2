#pragma once
// Koethe duality: analytic descriptor transforms (exponent duality on
// weighted leaves, the Cesaro-space dual rules, duality of sums and
// intersections, conjugation of the CL parameter function), a brute-force
// dual-norm oracle, and the conjugate function phi-hat.

#include "ceslab/norm.hpp"

namespace ceslab {

// ---------------------------------------------------------------------------
// conjugate function: phi_hat(s,t) = inf{(a s + b t)/phi(a,b) : a,b > 0}
// ---------------------------------------------------------------------------

inline double conjugate_phi(const PhiDesc& phi, double s, double t) {
    if (s < 0 || t < 0) throw Error("conjugate_phi: s,t must be nonnegative");
    using K = PhiDesc::Kind;
    switch (phi.kind) {
        case K::Min: return s + t;
        case K::Sum: return std::min(s, t);
        case K::Max: return std::min(s, t);  // literal conjugate; max is not concave
        case K::Power: {
            double th = phi.theta;
            if (th == 0) return s;
            if (th == 1) return t;
            if (s == 0 || t == 0) return 0;  // monotone limit
            // homogeneity: fix b = 1, golden section over log a
            auto h = [&](double la) {
                double a = std::exp(la);
                return (a * s + t) / phi(a, 1.0);
            };
            auto [la, v] = opt::golden_min(h, std::log(1e-8), std::log(1e8), 96);
            (void)la;
            return v;
        }
    }
    return 0;
}

// Numeric double conjugation: inf over a of (a s + t)/phi_hat(a,1) with the
// inner conjugate evaluated by conjugate_phi itself.
inline double conjugate_phi_twice(const PhiDesc& phi, double s, double t) {
    if (s == 0 && t == 0) return 0;
    auto h = [&](double la) {
        double a = std::exp(la);
        double inner = conjugate_phi(phi, a, 1.0);
        return inner > 0 ? (a * s + t) / inner : kInf;
    };
    auto [la, v] = opt::golden_min(h, std::log(1e-8), std::log(1e8), 96);
    (void)la;
    return v;
}

// Structural conjugate of the parameter function. For the power kind the
// conjugate is c_theta * s^(1-theta) t^theta; the scalar is dropped at the
// descriptor level, giving an equivalent norm within c_theta <= 2.
inline PhiDesc conjugate_phi_desc(const PhiDesc& phi) {
    using K = PhiDesc::Kind;
    switch (phi.kind) {
        case K::Power: return phi;
        case K::Min: return PhiDesc::sum();
        case K::Sum: return PhiDesc::min();
        case K::Max: return PhiDesc::min();
    }
    return phi;
}

// ---------------------------------------------------------------------------
// dual_space: analytic Koethe-dual descriptor transform with a rule trace
// ---------------------------------------------------------------------------

struct DualRuleStep {
    std::string rule;   // e.g. "exponent-dual"
    std::string claim;  // claim-catalog id backing the rule
};

struct DualRuleTrace {
    std::string input, output;
    std::vector<DualRuleStep> steps;

    std::string to_text() const {
        std::string s = input + " -> " + output + "\n";
        for (const auto& st : steps) s += "  " + st.rule + " [" + st.claim + "]\n";
        return s;
    }
};

inline double conjugate_exponent(double p) {
    if (p == 1.0) return kInf;
    if (p == kInf) return 1.0;
    return p / (p - 1.0);
}

class DualRuleError : public Error {
public:
    explicit DualRuleError(const std::string& msg) : Error("no applicable dual rule: " + msg) {}
};

namespace detail {

inline double leaf_power_alpha(const SpaceDesc& leaf) {
    if (!leaf.weight) return 0.0;
    auto f = leaf.weight->form();
    if (f.base == Weight::Form::Base::PowX) return f.e;
    return std::numeric_limits<double>::quiet_NaN();  // not a power weight
}

inline SpacePtr dual_rec(const SpaceDesc& d, std::vector<DualRuleStep>& steps) {
    using N = SpaceDesc::Node;
    switch (d.node) {
        case N::SeqLeaf: {
            steps.push_back({"exponent-dual", d.weight ? "Eq1.3" : "Eq1.1"});
            std::optional<Weight> w;
            if (d.weight) w = Weight::recip(*d.weight);
            return lp(conjugate_exponent(d.p), std::move(w));
        }
        case N::LpLeaf: {
            steps.push_back({"exponent-dual", d.weight ? "Eq1.3" : "Eq1.1"});
            std::optional<Weight> w;
            if (d.weight) w = Weight::recip(*d.weight);
            return Lp(conjugate_exponent(d.p), d.domain, std::move(w));
        }
        case N::Weighted: {
            steps.push_back({"weighted-dual", "Eq1.3"});
            return W(dual_rec(*d.left, steps), Weight::recip(*d.weight));
        }
        case N::Ces: {
            const SpaceDesc& c = *d.left;
            if (c.node == N::SeqLeaf) {
                double alpha = leaf_power_alpha(c);
                if (c.p > 1 && c.p < kInf && alpha == 0.0) {
                    steps.push_back({"cesaro-dual-sequence", "ThA.iii"});
                    std::vector<DualRuleStep> sub;
                    return Tan(dual_rec(c, sub));
                }
                throw DualRuleError("Ces over this sequence leaf (need 1 < p < inf, unit weight)");
            }
            if (c.node == N::LpLeaf && c.domain == Domain::Half) {
                double alpha = leaf_power_alpha(c);
                double invp = c.p == kInf ? 0.0 : 1.0 / c.p;
                if (finite(alpha) && c.p > 1 && alpha + invp < 1.0) {
                    steps.push_back({"cesaro-dual-halfline", "ThA.i"});
                    std::vector<DualRuleStep> sub;
                    return Tan(dual_rec(c, sub));
                }
                throw DualRuleError(
                    "Ces over this half-line leaf (need p > 1, power weight with alpha + 1/p < 1)");
            }
            if (c.node == N::LpLeaf && c.domain == Domain::Unit) {
                bool symmetric = !c.weight || c.weight->kind == Weight::Kind::One;
                if (symmetric && c.p > 1 && c.p < kInf) {
                    steps.push_back({"cesaro-dual-unit-symmetric", "ThA.ii"});
                    std::vector<DualRuleStep> sub;
                    SpacePtr xd = dual_rec(c, sub);
                    return Tan(W(std::move(xd), Weight::recip(Weight::one_minus())));
                }
                throw DualRuleError(
                    "Ces over this [0,1] leaf (need a symmetric leaf with 1 < p < inf)");
            }
            throw DualRuleError("Ces over a non-leaf child");
        }
        case N::Sum: {
            steps.push_back({"dual-of-sum-is-intersection", "DualSumCap"});
            return Cap(dual_rec(*d.left, steps), dual_rec(*d.right, steps));
        }
        case N::Cap: {
            steps.push_back({"dual-of-intersection-is-sum", "DualSumCap"});
            return Sum(dual_rec(*d.left, steps), dual_rec(*d.right, steps));
        }
        case N::CL: {
            steps.push_back({"lozanovskii-dual", "Eq3.1"});
            return CL(conjugate_phi_desc(d.phi), dual_rec(*d.left, steps),
                      dual_rec(*d.right, steps));
        }
        case N::Cop: throw DualRuleError("Copson duals are not provided");
        case N::Tan: throw DualRuleError("Tandori duals are not provided");
        case N::RealK: throw DualRuleError("duals of RealK spaces are out of scope");
    }
    throw DualRuleError("unknown node");
}

}  // namespace detail

struct DualSpaceResult {
    SpacePtr space;
    DualRuleTrace trace;
};

inline DualSpaceResult dual_space(const SpaceDesc& d) {
    DualRuleTrace tr;
    tr.input = render(d);
    SpacePtr out = detail::dual_rec(d, tr.steps);
    tr.output = render(*out);
    return {std::move(out), std::move(tr)};
}
inline DualSpaceResult dual_space(const SpacePtr& d) { return dual_space(*d); }

// ---------------------------------------------------------------------------
// dual_norm_oracle: lower-bound estimate of sup { <|f|,g> : ||g||_X <= 1 }
// by sign-aligned projected ascent with multi-start. For weighted lp/Lp
// leaves the exact Hoelder extremizer is used directly.
// ---------------------------------------------------------------------------

struct OracleResult {
    NormResult res;
    bool budget_exhausted = false;
    std::vector<double> maximizer;  // achieving g (entries / cells)
};

namespace detail {

struct PairingView {
    std::vector<double> fvals;    // |f| entries or cells
    std::vector<double> weights;  // 1 for sequences, cell widths for functions
    double pair(const std::vector<double>& g) const {
        double s = 0;
        for (std::size_t i = 0; i < fvals.size(); ++i) s += fvals[i] * g[i] * weights[i];
        return s;
    }
};

inline bool leaf_chain(const SpaceDesc& d) {
    const SpaceDesc* cur = &d;
    while (cur->node == SpaceDesc::Node::Weighted) cur = cur->left.get();
    return cur->is_leaf();
}

}  // namespace detail

inline OracleResult dual_norm_oracle(const SpaceDesc& space, const Element& f, long budget,
                                     const EvalPolicy& pol = {}, bool enlarge_support = false) {
    validate_element(space, f);
    const bool is_seq = std::holds_alternative<Seq>(f);

    detail::PairingView pv;
    Domain dom = Domain::Unit;
    std::vector<double> xs;
    if (is_seq) {
        const Seq& a = std::get<Seq>(f);
        if (a.support() > 32) throw Error("dual_norm_oracle: sequence support must be <= 32");
        std::size_t n = std::max<std::size_t>(a.support(), 1);
        if (enlarge_support) n *= 2;  // one dyadic ring
        pv.fvals.resize(n);
        pv.weights.assign(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) pv.fvals[i] = std::fabs(a.at(i + 1));
    } else {
        const PCFun& fn = std::get<PCFun>(f);
        if (fn.cell_count() > 64) throw Error("dual_norm_oracle: function must have <= 64 cells");
        dom = fn.domain;
        xs = fn.xs;
        pv.fvals.resize(fn.cell_count());
        pv.weights.resize(fn.cell_count());
        for (std::size_t i = 0; i < fn.cell_count(); ++i) {
            pv.fvals[i] = std::fabs(fn.cells[i]);
            pv.weights[i] = fn.width(i);
        }
    }
    const std::size_t n = pv.fvals.size();

    auto norm_of = [&](const std::vector<double>& g) -> double {
        if (is_seq) return detail::eval_seq(space, detail::SeqElem{g, 0, 1}, pol).value;
        return detail::eval_fn(space, detail::FnElem{PCFun(dom, xs, g), 0, 1}, pol).value;
    };

    OracleResult out;
    out.maximizer.assign(n, 0.0);
    double best = 0;
    long evals = 0;
    auto consider = [&](std::vector<double> g) {
        double N = norm_of(g);
        ++evals;
        if (!(N > 0) || !finite(N)) return;
        for (double& x : g) x /= N;
        double v = pv.pair(g);
        if (v > best) {
            best = v;
            out.maximizer = g;
        }
    };

    // exact Hoelder extremizer for weighted lp / Lp leaves: the dual norm is
    // the p'-norm against the reciprocal weight, attained in closed form
    bool exact_leaf = detail::leaf_chain(space);
    if (exact_leaf) {
        std::vector<Weight> ws;
        const SpaceDesc& leaf = detail::unwrap_weighted(space, ws);
        double p = leaf.p, pc = conjugate_exponent(p);
        auto wq = [&](std::size_t i) {
            double x = is_seq ? double(i + 1)
                              : (xs[i] > 0 ? std::sqrt(xs[i] * xs[i + 1]) : 0.5 * (xs[i] + xs[i + 1]));
            double w = 1;
            for (const Weight& W : ws) w *= W.value(x);
            return w;
        };
        std::vector<double> g(n, 0.0);
        if (pc == kInf) {
            // maximize f_i g_i with (g w) summable: mass at the best ratio
            std::size_t arg = 0;
            double m = -1;
            for (std::size_t i = 0; i < n; ++i) {
                double r = pv.fvals[i] / wq(i);
                if (r > m) {
                    m = r;
                    arg = i;
                }
            }
            g[arg] = 1.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                double w = wq(i);
                double r = pv.fvals[i] / w;
                g[i] = (r > 0) ? std::pow(r, pc - 1.0) / w : 0.0;
            }
        }
        consider(std::move(g));
    }

    // ascent starts
    std::vector<std::vector<double>> starts;
    starts.push_back(pv.fvals);
    starts.emplace_back(n, 1.0);
    {
        std::vector<double> sq = pv.fvals;
        for (double& x : sq) x = std::sqrt(x);
        starts.push_back(std::move(sq));
    }
    std::mt19937_64 eng(pol.solver_seed ^ 0xA5A5A5A5ull);
    auto uni = [&]() { return (eng() >> 11) * 0x1.0p-53; };
    for (int k = 0; k < 3; ++k) {
        std::vector<double> r(n);
        for (double& x : r) x = uni() + 1e-3;
        starts.push_back(std::move(r));
    }

    const bool grads = is_seq ? detail::grad_supported(space, true)
                              : detail::grad_supported(space, false);
    long per_start = std::max<long>(8, budget / static_cast<long>(starts.size() + 1));

    for (auto& s0 : starts) {
        std::vector<double> g = s0;
        double N = norm_of(g);
        ++evals;
        if (!(N > 0) || !finite(N)) continue;
        for (double& x : g) x /= N;
        double val = pv.pair(g);
        if (val > best) {
            best = val;
            out.maximizer = g;
        }
        double step = 1.0;
        std::vector<double> gn(n), trial(n);
        for (long it = 0; it < per_start && evals < budget; ++it) {
            // gradient of the ratio <f,g>/||g|| at ||g|| = 1
            double tg;
            double Ng;
            if (grads) {
                Ng = is_seq ? detail::grad_seq(space, detail::SeqElem{g, 0, 1}, pol, gn, tg)
                            : detail::grad_fn(space, detail::FnElem{PCFun(dom, xs, g), 0, 1}, pol, gn);
            } else {
                Ng = norm_of(g);
                double h = 1e-6;
                for (std::size_t i = 0; i < n; ++i) {
                    trial = g;
                    trial[i] += h;
                    gn[i] = (norm_of(trial) - Ng) / h;
                }
                evals += static_cast<long>(n);
            }
            ++evals;
            bool improved = false;
            double s = step;
            for (int bt = 0; bt < 12; ++bt) {
                for (std::size_t i = 0; i < n; ++i) {
                    double dir = pv.fvals[i] * pv.weights[i] - val * gn[i];
                    trial[i] = std::max(0.0, g[i] + s * dir);
                }
                double Nt = norm_of(trial);
                ++evals;
                if (Nt > 0 && finite(Nt)) {
                    for (double& x : trial) x /= Nt;
                    double vt = pv.pair(trial);
                    if (vt > val * (1 + 1e-14)) {
                        g = trial;
                        val = vt;
                        improved = true;
                        step = s * 2;
                        if (val > best) {
                            best = val;
                            out.maximizer = g;
                        }
                        break;
                    }
                }
                s *= 0.25;
            }
            if (!improved) {
                step *= 0.25;
                if (step < 1e-12) break;
            }
        }
        if (evals >= budget) {
            out.budget_exhausted = !exact_leaf;
            break;
        }
    }

    out.res.value = best;
    out.res.solverIterations = evals;
    if (out.budget_exhausted) out.res.errorBound = std::max(out.res.errorBound, 1e-3);
    return out;
}

}  // namespace ceslab
