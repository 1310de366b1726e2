#pragma once
// Recursive-descent parser for the descriptor grammar:
//   space := "Lp(" num "," dom ["," wt] ")" | "lp(" num ["," wt] ")"
//          | "Ces(" space ")" | "Cop(" space ")" | "Tan(" space ")"
//          | "W(" space "," wt ")" | "Sum(" space "," space ")"
//          | "Cap(" space "," space ")" | "CL(" phi "," space "," space ")"
//          | "RealK(" space "," space "," num "," num ")"
//   phi := "pow(" num ")" | "min" | "max" | "sum"
//   wt  := "one" | "pow(" num ")" | "oneminus" | "invt" | "recip(" wt ")"
//   dom := "[0,1]" | "[0,inf)"
// Whitespace-insensitive. Errors carry the character position.

#include <cctype>
#include <string>

#include "ceslab/space.hpp"

namespace ceslab {

class ParseError : public Error {
public:
    std::size_t position;
    ParseError(const std::string& msg, std::size_t pos)
        : Error(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
};

namespace detail {

class DescParser {
public:
    explicit DescParser(std::string_view text) : text_(text) {}

    SpacePtr parse_space_full() {
        SpacePtr s = parse_space();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing input after descriptor");
        measure_space(*s);  // reject mixed measure spaces
        return s;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool try_consume(std::string_view tok) {
        skip_ws();
        if (text_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c)
            fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (pos_ == start) fail("expected a name");
        return std::string(text_.substr(start, pos_ - start));
    }

    double number() {
        skip_ws();
        if (try_consume("inf")) return kInf;
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                c == '+' || c == 'e' || c == 'E')
                ++pos_;
            else
                break;
        }
        if (pos_ == start) fail("expected a number");
        try {
            return std::stod(std::string(text_.substr(start, pos_ - start)));
        } catch (const std::exception&) {
            pos_ = start;
            fail("malformed number");
        }
    }

    Domain domain() {
        skip_ws();
        if (try_consume("[0,1]")) return Domain::Unit;
        if (try_consume("[0,inf)")) return Domain::Half;
        fail("expected a domain, [0,1] or [0,inf)");
    }

    Weight weight() {
        std::size_t at = pos_;
        std::string name = ident();
        if (name == "one") return Weight::one();
        if (name == "oneminus") return Weight::one_minus();
        if (name == "invt") return Weight::inv_t();
        if (name == "pow") {
            expect('(');
            double a = number();
            expect(')');
            return Weight::power(a);
        }
        if (name == "recip") {
            expect('(');
            Weight w = weight();
            expect(')');
            return Weight::recip(w);
        }
        pos_ = at;
        fail("unknown weight '" + name + "'");
    }

    PhiDesc phi() {
        std::size_t at = pos_;
        std::string name = ident();
        if (name == "min") return PhiDesc::min();
        if (name == "max") return PhiDesc::max();
        if (name == "sum") return PhiDesc::sum();
        if (name == "pow") {
            expect('(');
            double th = number();
            expect(')');
            if (!(th >= 0 && th <= 1)) {
                pos_ = at;
                fail("phi exponent out of range [0,1]");
            }
            return PhiDesc::power(th);
        }
        pos_ = at;
        fail("unknown phi '" + name + "'");
    }

    SpacePtr parse_space() {
        std::size_t at = pos_;
        std::string name = ident();
        auto rewrap = [&](const Error& e) -> SpacePtr {
            pos_ = at;
            fail(e.what());
        };
        try {
            if (name == "Lp") {
                expect('(');
                double p = number();
                expect(',');
                Domain dom = domain();
                std::optional<Weight> w;
                if (try_consume(",")) w = weight();
                expect(')');
                return Lp(p, dom, std::move(w));
            }
            if (name == "lp") {
                expect('(');
                double p = number();
                std::optional<Weight> w;
                if (try_consume(",")) w = weight();
                expect(')');
                return lp(p, std::move(w));
            }
            if (name == "Ces" || name == "Cop" || name == "Tan") {
                expect('(');
                SpacePtr c = parse_space();
                expect(')');
                if (name == "Ces") return Ces(std::move(c));
                if (name == "Cop") return Cop(std::move(c));
                return Tan(std::move(c));
            }
            if (name == "W") {
                expect('(');
                SpacePtr c = parse_space();
                expect(',');
                Weight w = weight();
                expect(')');
                return W(std::move(c), std::move(w));
            }
            if (name == "Sum" || name == "Cap") {
                expect('(');
                SpacePtr a = parse_space();
                expect(',');
                SpacePtr b = parse_space();
                expect(')');
                return name == "Sum" ? Sum(std::move(a), std::move(b))
                                     : Cap(std::move(a), std::move(b));
            }
            if (name == "CL") {
                expect('(');
                PhiDesc ph = phi();
                expect(',');
                SpacePtr a = parse_space();
                expect(',');
                SpacePtr b = parse_space();
                expect(')');
                return CL(ph, std::move(a), std::move(b));
            }
            if (name == "RealK") {
                expect('(');
                SpacePtr a = parse_space();
                expect(',');
                SpacePtr b = parse_space();
                expect(',');
                double th = number();
                expect(',');
                double q = number();
                expect(')');
                return RealK(std::move(a), std::move(b), th, q);
            }
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            return rewrap(e);  // constructor-level validation, pinned to this position
        }
        pos_ = at;
        fail("unknown space constructor '" + name + "'");
    }
};

}  // namespace detail

inline SpacePtr parse_space(std::string_view text) {
    return detail::DescParser(text).parse_space_full();
}

}  // namespace ceslab
