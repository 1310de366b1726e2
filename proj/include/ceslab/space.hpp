#pragma once
// Space descriptors: the tree of constructors (Lp/lp leaves, Cesaro, Copson,
// Tandori, weighted, sum, intersection, Calderon-Lozanovskii, real K-method)
// plus the phi functions of class U used by the CL construction.

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "ceslab/core.hpp"

namespace ceslab {

// ---------------------------------------------------------------------------
// PhiDesc: positively homogeneous function on R+ x R+. Power/min/sum are
// concave (class U); max is kept literal and handled via its concave
// majorant s+t wherever class-U facts are needed.
// ---------------------------------------------------------------------------

struct PhiDesc {
    enum class Kind { Power, Min, Max, Sum };
    Kind kind = Kind::Power;
    double theta = 0.5;  // Power only, s^(1-theta) t^theta

    static PhiDesc power(double th) {
        if (!(th >= 0 && th <= 1)) throw Error("phi: theta must lie in [0,1]");
        return PhiDesc{Kind::Power, th};
    }
    static PhiDesc min() { return PhiDesc{Kind::Min, 0}; }
    static PhiDesc max() { return PhiDesc{Kind::Max, 0}; }
    static PhiDesc sum() { return PhiDesc{Kind::Sum, 0}; }

    double operator()(double s, double t) const {
        switch (kind) {
            case Kind::Power:
                if (theta == 0) return s;
                if (theta == 1) return t;
                if (s == 0 || t == 0) return 0;
                return std::pow(s, 1 - theta) * std::pow(t, theta);
            case Kind::Min: return std::min(s, t);
            case Kind::Max: return std::max(s, t);
            case Kind::Sum: return s + t;
        }
        return 0;
    }

    bool operator==(const PhiDesc& o) const {
        return kind == o.kind && (kind != Kind::Power || theta == o.theta);
    }
};

// ---------------------------------------------------------------------------
// SpaceDesc
// ---------------------------------------------------------------------------

struct SpaceDesc;
using SpacePtr = std::shared_ptr<const SpaceDesc>;

struct SpaceDesc {
    enum class Node { LpLeaf, SeqLeaf, Ces, Cop, Tan, Weighted, Sum, Cap, CL, RealK };

    Node node = Node::LpLeaf;
    double p = 2.0;                 // leaves: p in [1, inf]
    Domain domain = Domain::Unit;   // LpLeaf
    std::optional<Weight> weight;   // leaves (optional) and Weighted
    SpacePtr left, right;           // children (left only for unary nodes)
    PhiDesc phi;                    // CL
    double theta = 0.5, q = 2.0;    // RealK

    bool is_leaf() const { return node == Node::LpLeaf || node == Node::SeqLeaf; }
};

inline SpacePtr make_ptr(SpaceDesc d) { return std::make_shared<SpaceDesc>(std::move(d)); }

inline void check_p(double p) {
    if (!(p >= 1.0) && p != kInf) throw Error("p out of range: p must lie in [1,inf]");
}

inline SpacePtr Lp(double p, Domain dom, std::optional<Weight> w = std::nullopt) {
    check_p(p);
    if (w && w->unit_only() && dom != Domain::Unit)
        throw Error("weight 1-x is only defined on [0,1]");
    SpaceDesc d;
    d.node = SpaceDesc::Node::LpLeaf;
    d.p = p;
    d.domain = dom;
    d.weight = std::move(w);
    return make_ptr(std::move(d));
}

inline SpacePtr lp(double p, std::optional<Weight> w = std::nullopt) {
    check_p(p);
    if (w && !w->sequence_compatible())
        throw Error("sequence weight must be a power-type weight");
    SpaceDesc d;
    d.node = SpaceDesc::Node::SeqLeaf;
    d.p = p;
    d.weight = std::move(w);
    return make_ptr(std::move(d));
}

inline SpacePtr unary(SpaceDesc::Node n, SpacePtr child) {
    SpaceDesc d;
    d.node = n;
    d.left = std::move(child);
    return make_ptr(std::move(d));
}
inline SpacePtr Ces(SpacePtr x) { return unary(SpaceDesc::Node::Ces, std::move(x)); }
inline SpacePtr Cop(SpacePtr x) { return unary(SpaceDesc::Node::Cop, std::move(x)); }
inline SpacePtr Tan(SpacePtr x) { return unary(SpaceDesc::Node::Tan, std::move(x)); }

inline SpacePtr W(SpacePtr x, Weight w) {
    SpaceDesc d;
    d.node = SpaceDesc::Node::Weighted;
    d.left = std::move(x);
    d.weight = std::move(w);
    return make_ptr(std::move(d));
}

inline SpacePtr binary(SpaceDesc::Node n, SpacePtr a, SpacePtr b) {
    SpaceDesc d;
    d.node = n;
    d.left = std::move(a);
    d.right = std::move(b);
    return make_ptr(std::move(d));
}
inline SpacePtr Sum(SpacePtr a, SpacePtr b) { return binary(SpaceDesc::Node::Sum, std::move(a), std::move(b)); }
inline SpacePtr Cap(SpacePtr a, SpacePtr b) { return binary(SpaceDesc::Node::Cap, std::move(a), std::move(b)); }

inline SpacePtr CL(PhiDesc phi, SpacePtr a, SpacePtr b) {
    SpaceDesc d;
    d.node = SpaceDesc::Node::CL;
    d.phi = phi;
    d.left = std::move(a);
    d.right = std::move(b);
    return make_ptr(std::move(d));
}

inline SpacePtr RealK(SpacePtr a, SpacePtr b, double theta, double q) {
    if (!(theta > 0 && theta < 1)) throw Error("RealK: theta must lie strictly in (0,1)");
    check_p(q);
    SpaceDesc d;
    d.node = SpaceDesc::Node::RealK;
    d.left = std::move(a);
    d.right = std::move(b);
    d.theta = theta;
    d.q = q;
    return make_ptr(std::move(d));
}

// ---------------------------------------------------------------------------
// Measure space of a descriptor tree. All leaves must agree.
// ---------------------------------------------------------------------------

struct MeasureSpace {
    bool is_seq = false;
    Domain domain = Domain::Unit;
    bool operator==(const MeasureSpace&) const = default;
};

inline void collect_measure(const SpaceDesc& d, std::optional<MeasureSpace>& ms) {
    if (d.node == SpaceDesc::Node::LpLeaf || d.node == SpaceDesc::Node::SeqLeaf) {
        MeasureSpace here{d.node == SpaceDesc::Node::SeqLeaf, d.domain};
        if (!ms)
            ms = here;
        else if (!(*ms == here))
            throw Error("mixed measure spaces: all leaves of one tree must agree");
        return;
    }
    if (d.left) collect_measure(*d.left, ms);
    if (d.right) collect_measure(*d.right, ms);
}

inline MeasureSpace measure_space(const SpaceDesc& d) {
    std::optional<MeasureSpace> ms;
    collect_measure(d, ms);
    if (!ms) throw Error("descriptor has no leaves");
    return *ms;
}

// ---------------------------------------------------------------------------
// Structural equality and rendering (inverse of the parser).
// ---------------------------------------------------------------------------

inline bool equal(const SpaceDesc& a, const SpaceDesc& b) {
    if (a.node != b.node) return false;
    if (a.is_leaf()) {
        if (a.p != b.p) return false;
        if (a.node == SpaceDesc::Node::LpLeaf && a.domain != b.domain) return false;
        if (a.weight.has_value() != b.weight.has_value()) return false;
        if (a.weight && !(*a.weight == *b.weight)) return false;
        return true;
    }
    switch (a.node) {
        case SpaceDesc::Node::Weighted:
            if (!(*a.weight == *b.weight)) return false;
            break;
        case SpaceDesc::Node::CL:
            if (!(a.phi == b.phi)) return false;
            break;
        case SpaceDesc::Node::RealK:
            if (a.theta != b.theta || a.q != b.q) return false;
            break;
        default: break;
    }
    if (static_cast<bool>(a.left) != static_cast<bool>(b.left)) return false;
    if (static_cast<bool>(a.right) != static_cast<bool>(b.right)) return false;
    if (a.left && !equal(*a.left, *b.left)) return false;
    if (a.right && !equal(*a.right, *b.right)) return false;
    return true;
}

inline std::string render_num(double x) {
    if (x == kInf) return "inf";
    if (x == static_cast<long long>(x) && std::fabs(x) < 1e15) {
        return std::to_string(static_cast<long long>(x));
    }
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

inline std::string render(const Weight& w) {
    using K = Weight::Kind;
    switch (w.kind) {
        case K::One: return "one";
        case K::Power: return "pow(" + render_num(w.alpha) + ")";
        case K::OneMinus: return "oneminus";
        case K::InvT: return "invt";
        case K::Recip: return "recip(" + render(*w.inner) + ")";
        case K::Sampled: return "sampled";  // not part of the text grammar
    }
    return "one";
}

inline std::string render(const PhiDesc& phi) {
    using K = PhiDesc::Kind;
    switch (phi.kind) {
        case K::Power: return "pow(" + render_num(phi.theta) + ")";
        case K::Min: return "min";
        case K::Max: return "max";
        case K::Sum: return "sum";
    }
    return "min";
}

inline std::string render(const SpaceDesc& d) {
    using N = SpaceDesc::Node;
    switch (d.node) {
        case N::LpLeaf: {
            std::string s = "Lp(" + render_num(d.p) + "," + domain_name(d.domain);
            if (d.weight) s += "," + render(*d.weight);
            return s + ")";
        }
        case N::SeqLeaf: {
            std::string s = "lp(" + render_num(d.p);
            if (d.weight) s += "," + render(*d.weight);
            return s + ")";
        }
        case N::Ces: return "Ces(" + render(*d.left) + ")";
        case N::Cop: return "Cop(" + render(*d.left) + ")";
        case N::Tan: return "Tan(" + render(*d.left) + ")";
        case N::Weighted: return "W(" + render(*d.left) + "," + render(*d.weight) + ")";
        case N::Sum: return "Sum(" + render(*d.left) + "," + render(*d.right) + ")";
        case N::Cap: return "Cap(" + render(*d.left) + "," + render(*d.right) + ")";
        case N::CL:
            return "CL(" + render(d.phi) + "," + render(*d.left) + "," + render(*d.right) + ")";
        case N::RealK:
            return "RealK(" + render(*d.left) + "," + render(*d.right) + "," +
                   render_num(d.theta) + "," + render_num(d.q) + ")";
    }
    return "";
}

// ---------------------------------------------------------------------------
// Element validation: element kind and domain tag must match the leaves.
// ---------------------------------------------------------------------------

using Element = std::variant<Seq, PCFun>;

inline void validate_element(const SpaceDesc& space, const Element& x) {
    MeasureSpace ms = measure_space(space);
    if (std::holds_alternative<Seq>(x)) {
        if (!ms.is_seq)
            throw Error("element/space mismatch: sequence given for a function space");
        return;
    }
    const PCFun& f = std::get<PCFun>(x);
    if (ms.is_seq)
        throw Error("element/space mismatch: function given for a sequence space");
    if (f.domain != ms.domain)
        throw Error(std::string("element/space mismatch: function on ") +
                    domain_name(f.domain) + " given for a space on " +
                    domain_name(ms.domain));
}

}  // namespace ceslab
