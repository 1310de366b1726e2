#pragma once
// Core value types: finitely supported sequences, piecewise-constant
// functions on a breakpoint grid, and analytic weights with closed-form
// integrals. Everything here is an immutable value after construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ceslab {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool finite(double x) { return std::isfinite(x); }

// ---------------------------------------------------------------------------
// Seq: finitely supported real sequence. The tail beyond values.size() is
// identically zero; every operation must be invariant under zero-padding.
// ---------------------------------------------------------------------------

struct Seq {
    std::vector<double> values;

    Seq() = default;
    explicit Seq(std::vector<double> v) : values(std::move(v)) {
        for (double x : values)
            if (!finite(x)) throw Error("Seq: non-finite entry");
    }
    Seq(std::initializer_list<double> v) : Seq(std::vector<double>(v)) {}

    std::size_t size() const { return values.size(); }
    double at(std::size_t n1) const {  // 1-based, zero beyond support
        return (n1 >= 1 && n1 <= values.size()) ? values[n1 - 1] : 0.0;
    }

    // Length of support ignoring trailing zeros.
    std::size_t support() const {
        std::size_t n = values.size();
        while (n > 0 && values[n - 1] == 0.0) --n;
        return n;
    }

    Seq padded(std::size_t n) const {
        std::vector<double> v = values;
        if (v.size() < n) v.resize(n, 0.0);
        return Seq(std::move(v));
    }

    Seq abs() const {
        std::vector<double> v = values;
        for (double& x : v) x = std::fabs(x);
        return Seq(std::move(v));
    }

    double abs_sum() const {
        double s = 0;
        for (double x : values) s += std::fabs(x);
        return s;
    }
};

// ---------------------------------------------------------------------------
// PCFun: piecewise-constant function. Value is cells[i] on [xs[i], xs[i+1])
// and zero outside [xs.front(), xs.back()). The domain tag records whether
// the function lives on [0,1] or on the (truncated) half-line.
// ---------------------------------------------------------------------------

enum class Domain { Unit, Half };

inline const char* domain_name(Domain d) {
    return d == Domain::Unit ? "[0,1]" : "[0,inf)";
}

struct PCFun {
    Domain domain = Domain::Unit;
    std::vector<double> xs;     // breakpoints, strictly increasing, xs[0] >= 0
    std::vector<double> cells;  // one value per cell

    PCFun() = default;
    PCFun(Domain d, std::vector<double> breakpoints, std::vector<double> values)
        : domain(d), xs(std::move(breakpoints)), cells(std::move(values)) {
        if (xs.size() < 2 || cells.size() + 1 != xs.size())
            throw Error("PCFun: need N+1 breakpoints for N cells");
        if (xs.front() < 0) throw Error("PCFun: breakpoints must satisfy x0 >= 0");
        for (std::size_t i = 0; i + 1 < xs.size(); ++i)
            if (!(xs[i] < xs[i + 1]))
                throw Error("PCFun: breakpoints must be strictly increasing");
        for (double v : cells)
            if (!finite(v)) throw Error("PCFun: non-finite cell value");
        if (domain == Domain::Unit && xs.back() > 1.0 + 1e-12)
            throw Error("PCFun: breakpoints exceed [0,1]");
    }

    std::size_t cell_count() const { return cells.size(); }
    double start() const { return xs.front(); }
    double end() const { return xs.back(); }

    double value_at(double x) const {
        if (x < xs.front() || x >= xs.back()) return 0.0;
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
        if (i >= cells.size()) i = cells.size() - 1;
        return cells[i];
    }

    double width(std::size_t i) const { return xs[i + 1] - xs[i]; }

    double integral() const {
        double s = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) s += cells[i] * width(i);
        return s;
    }
    double integral_abs() const {
        double s = 0;
        for (std::size_t i = 0; i < cells.size(); ++i) s += std::fabs(cells[i]) * width(i);
        return s;
    }

    PCFun abs() const {
        std::vector<double> v = cells;
        for (double& c : v) c = std::fabs(c);
        return PCFun(domain, xs, std::move(v));
    }

    PCFun scaled(double a) const {
        std::vector<double> v = cells;
        for (double& c : v) c *= a;
        return PCFun(domain, xs, std::move(v));
    }
};

// Log-spaced grid nodes (a, b > 0), n cells.
inline std::vector<double> log_grid(double a, double b, std::size_t n) {
    if (!(a > 0 && b > a) || n == 0) throw Error("log_grid: need 0 < a < b, n >= 1");
    std::vector<double> xs(n + 1);
    const double la = std::log(a), lb = std::log(b);
    for (std::size_t i = 0; i <= n; ++i)
        xs[i] = std::exp(la + (lb - la) * static_cast<double>(i) / static_cast<double>(n));
    xs.front() = a;
    xs.back() = b;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)  // guard against rounding collisions
        if (xs[i + 1] <= xs[i]) xs[i + 1] = std::nextafter(xs[i], kInf);
    return xs;
}

inline std::vector<double> lin_grid(double a, double b, std::size_t n) {
    if (!(b > a) || n == 0) throw Error("lin_grid: need a < b, n >= 1");
    std::vector<double> xs(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        xs[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n);
    xs.back() = b;
    return xs;
}

// Split each cell into k parts; geometric split when the cell is bounded away
// from zero (log grids), arithmetic otherwise.
inline PCFun refined(const PCFun& f, int k = 2) {
    if (k <= 1) return f;
    std::vector<double> xs, cells;
    xs.reserve(f.xs.size() * static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < f.cell_count(); ++i) {
        double a = f.xs[i], b = f.xs[i + 1];
        xs.push_back(a);
        for (int j = 1; j < k; ++j) {
            double t = static_cast<double>(j) / k;
            double m = (a > 0) ? std::exp(std::log(a) + t * (std::log(b) - std::log(a)))
                               : a + t * (b - a);
            if (m > xs.back() && m < b) {
                xs.push_back(m);
                cells.push_back(f.cells[i]);
            }
        }
        cells.push_back(f.cells[i]);
    }
    xs.push_back(f.xs.back());
    return PCFun(f.domain, std::move(xs), std::move(cells));
}

// Merge breakpoint sets and evaluate both functions on the union grid.
inline std::pair<PCFun, PCFun> common_refine(const PCFun& f, const PCFun& g) {
    if (f.domain != g.domain) throw Error("common_refine: mismatched domains");
    std::vector<double> xs;
    xs.reserve(f.xs.size() + g.xs.size());
    std::merge(f.xs.begin(), f.xs.end(), g.xs.begin(), g.xs.end(), std::back_inserter(xs));
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::vector<double> fv(xs.size() - 1), gv(xs.size() - 1);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        fv[i] = f.value_at(xs[i]);
        gv[i] = g.value_at(xs[i]);
    }
    return {PCFun(f.domain, xs, std::move(fv)), PCFun(f.domain, xs, std::move(gv))};
}

template <class F>
inline PCFun pc_combine(const PCFun& f, const PCFun& g, F&& op) {
    auto [a, b] = common_refine(f, g);
    std::vector<double> v(a.cell_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = op(a.cells[i], b.cells[i]);
    return PCFun(a.domain, a.xs, std::move(v));
}

inline PCFun pc_add(const PCFun& f, const PCFun& g) {
    return pc_combine(f, g, [](double x, double y) { return x + y; });
}

// ---------------------------------------------------------------------------
// Weight: analytic weight on the measure space. Kept as the syntactic tree
// from the descriptor grammar; evaluation and closed-form power integrals
// reduce to x^e, (1-x)^e or a sampled piecewise factor.
// ---------------------------------------------------------------------------

struct Weight {
    enum class Kind { One, Power, OneMinus, InvT, Recip, Sampled };

    Kind kind = Kind::One;
    double alpha = 0.0;                  // Power exponent
    std::shared_ptr<const Weight> inner; // Recip
    std::shared_ptr<const PCFun> samples;

    static Weight one() { return Weight{}; }
    static Weight power(double a) {
        Weight w;
        w.kind = Kind::Power;
        w.alpha = a;
        return w;
    }
    static Weight one_minus() {
        Weight w;
        w.kind = Kind::OneMinus;
        return w;
    }
    static Weight inv_t() {
        Weight w;
        w.kind = Kind::InvT;
        return w;
    }
    static Weight recip(const Weight& w) {
        if (w.kind == Kind::Recip) return *w.inner;  // recip(recip(w)) = w
        if (w.kind == Kind::One) return w;
        Weight r;
        r.kind = Kind::Recip;
        r.inner = std::make_shared<Weight>(w);
        return r;
    }
    static Weight sampled(PCFun pc) {
        for (double v : pc.cells)
            if (!(v > 0)) throw Error("sampled weight must be positive on its carrier");
        Weight w;
        w.kind = Kind::Sampled;
        w.samples = std::make_shared<PCFun>(std::move(pc));
        return w;
    }

    bool operator==(const Weight& o) const {
        if (kind != o.kind || alpha != o.alpha) return false;
        if (kind == Kind::Recip) return *inner == *o.inner;
        if (kind == Kind::Sampled)
            return samples->xs == o.samples->xs && samples->cells == o.samples->cells;
        return true;
    }

    // Resolved analytic form: sign s applied to the exponent of the base kind.
    struct Form {
        enum class Base { PowX, PowOneMinusX, Sampled } base;
        double e = 0;  // exponent
        const PCFun* pc = nullptr;
        bool pc_recip = false;
    };

    Form form() const {
        switch (kind) {
            case Kind::One: return {Form::Base::PowX, 0.0, nullptr, false};
            case Kind::Power: return {Form::Base::PowX, alpha, nullptr, false};
            case Kind::InvT: return {Form::Base::PowX, -1.0, nullptr, false};
            case Kind::OneMinus: return {Form::Base::PowOneMinusX, 1.0, nullptr, false};
            case Kind::Sampled: return {Form::Base::Sampled, 1.0, samples.get(), false};
            case Kind::Recip: {
                Form f = inner->form();
                if (f.base == Form::Base::Sampled)
                    f.pc_recip = !f.pc_recip;
                else
                    f.e = -f.e;
                return f;
            }
        }
        throw Error("weight: bad kind");
    }

    double value(double x) const {
        Form f = form();
        switch (f.base) {
            case Form::Base::PowX: return f.e == 0 ? 1.0 : std::pow(x, f.e);
            case Form::Base::PowOneMinusX: return std::pow(1.0 - x, f.e);
            case Form::Base::Sampled: {
                double v = f.pc->value_at(x);
                if (v == 0) return f.pc_recip ? kInf : 0.0;
                return f.pc_recip ? 1.0 / v : v;
            }
        }
        return 1.0;
    }

    // ∫_a^b value(x)^p dx, closed form (sampled weights per sub-cell).
    double pow_integral(double a, double b, double p) const {
        if (!(b > a)) return 0.0;
        Form f = form();
        switch (f.base) {
            case Form::Base::PowX: {
                double e = f.e * p;
                if (e == 0) return b - a;
                if (e == -1.0) return std::log(b / a);
                return (std::pow(b, e + 1) - std::pow(a, e + 1)) / (e + 1);
            }
            case Form::Base::PowOneMinusX: {
                double e = f.e * p;
                if (e == 0) return b - a;
                if (e == -1.0) return std::log((1.0 - a) / (1.0 - b));
                return (std::pow(1.0 - a, e + 1) - std::pow(1.0 - b, e + 1)) / (e + 1);
            }
            case Form::Base::Sampled: {
                double s = 0;
                const PCFun& pc = *f.pc;
                for (std::size_t i = 0; i < pc.cell_count(); ++i) {
                    double lo = std::max(a, pc.xs[i]), hi = std::min(b, pc.xs[i + 1]);
                    if (hi <= lo) continue;
                    double v = f.pc_recip ? 1.0 / pc.cells[i] : pc.cells[i];
                    s += std::pow(v, p) * (hi - lo);
                }
                return s;
            }
        }
        return 0.0;
    }

    // sup of value(x)^p over [a,b]; may be +inf near a singular endpoint.
    double pow_sup(double a, double b, double p) const {
        Form f = form();
        switch (f.base) {
            case Form::Base::PowX: {
                double e = f.e * p;
                if (e == 0) return 1.0;
                return e > 0 ? std::pow(b, e) : std::pow(a, e);
            }
            case Form::Base::PowOneMinusX: {
                double e = f.e * p;
                if (e == 0) return 1.0;
                return e > 0 ? std::pow(1.0 - a, e) : std::pow(1.0 - b, e);
            }
            case Form::Base::Sampled: {
                double m = 0;
                const PCFun& pc = *f.pc;
                for (std::size_t i = 0; i < pc.cell_count(); ++i) {
                    double lo = std::max(a, pc.xs[i]), hi = std::min(b, pc.xs[i + 1]);
                    if (hi <= lo) continue;
                    double v = f.pc_recip ? 1.0 / pc.cells[i] : pc.cells[i];
                    m = std::max(m, std::pow(v, p));
                }
                return m;
            }
        }
        return 1.0;
    }

    // Valid as a weight over the natural numbers (sequence leaves)?
    bool sequence_compatible() const {
        Form f = form();
        return f.base == Form::Base::PowX;
    }
    bool unit_only() const { return form().base == Form::Base::PowOneMinusX; }
};

}  // namespace ceslab
