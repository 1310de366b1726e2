#pragma once
// Discrete operator kernels on finitely supported sequences. All of these
// are exact in double arithmetic: the Cesaro image is (1/n) sum_{k<=n} a_k,
// the Copson image sums a_k/k tails, and the dilations repeat or block-average
// entries. Output lengths are explicit; inputs are zero beyond their support.

#include "ceslab/core.hpp"

namespace ceslab {

enum class OpTag { C, Cstar, Majorant, DilateUp, DilateDown, Shift, CoShift, Maximal, Rearrange };

// (C_d a)_n = (1/n) sum_{k=1..n} a_k for n = 1..m.
inline Seq cesaro_seq(const Seq& a, std::size_t m) {
    if (m == 0) throw Error("cesaro_seq: output length must be >= 1");
    std::vector<double> out(m);
    double run = 0;
    for (std::size_t n = 1; n <= m; ++n) {
        run += a.at(n);
        out[n - 1] = run / static_cast<double>(n);
    }
    return Seq(std::move(out));
}

// (C*_d a)_n = sum_{k>=n} a_k / k; the sum is finite by finite support.
inline Seq copson_seq(const Seq& a, std::size_t m) {
    if (m == 0) throw Error("copson_seq: output length must be >= 1");
    std::size_t sup = a.support();
    std::vector<double> out(m, 0.0);  // entries beyond the support stay zero
    double tail = 0;
    for (std::size_t k = sup; k >= 1; --k) {
        tail += a.at(k) / static_cast<double>(k);
        if (k <= m) out[k - 1] = tail;
    }
    return Seq(std::move(out));
}

// Nonincreasing majorant: result_n = max_{k>=n} |a_k|, same length as input.
inline Seq majorant_seq(const Seq& a) {
    std::vector<double> out(a.size());
    double run = 0;
    for (std::size_t i = a.size(); i-- > 0;) {
        run = std::max(run, std::fabs(a.values[i]));
        out[i] = run;
    }
    return Seq(std::move(out));
}

enum class DilateDir { Up, Down };

// Up: each entry repeated m times (sigma_m). Down: block means of length m
// (sigma_{1/m}).
inline Seq dilate_seq(const Seq& a, DilateDir dir, std::size_t m) {
    if (m == 0) throw Error("dilate_seq: parameter must be a positive integer");
    if (dir == DilateDir::Up) {
        std::vector<double> out;
        out.reserve(a.size() * m);
        for (double v : a.values)
            for (std::size_t j = 0; j < m; ++j) out.push_back(v);
        return Seq(std::move(out));
    }
    std::size_t blocks = (a.size() + m - 1) / m;
    std::vector<double> out(blocks, 0.0);
    for (std::size_t n = 0; n < blocks; ++n) {
        double s = 0;
        for (std::size_t k = n * m + 1; k <= (n + 1) * m; ++k) s += a.at(k);
        out[n] = s / static_cast<double>(m);
    }
    return Seq(std::move(out));
}

enum class ShiftDir { Forward, Backward };

// Forward is the unilateral shift S (prepend a zero); backward is its
// adjoint S* under the pairing sum a_n b_n (drop the first entry).
inline Seq shift_seq(const Seq& a, ShiftDir dir) {
    if (dir == ShiftDir::Forward) {
        std::vector<double> out;
        out.reserve(a.size() + 1);
        out.push_back(0.0);
        out.insert(out.end(), a.values.begin(), a.values.end());
        return Seq(std::move(out));
    }
    if (a.size() == 0) return Seq{};
    return Seq(std::vector<double>(a.values.begin() + 1, a.values.end()));
}

// Exact evaluation of [C*_d (S C_d a)]_n for n = 1..m. The shifted Cesaro
// image has the closed tail (S C_d a)_k = s/(k-1) for k-1 beyond the support
// of a (s = sum a), so the Copson sum telescopes: the part beyond K adds s/K.
inline Seq copson_of_shifted_cesaro(const Seq& a, std::size_t m) {
    std::size_t sup = std::max<std::size_t>(a.support(), 1);
    std::size_t K = std::max(m + 1, sup + 1);
    Seq b = shift_seq(cesaro_seq(a, K), ShiftDir::Forward);  // length K+1
    double s = 0;
    for (double v : a.values) s += v;
    std::vector<double> out(m, 0.0);
    double tail = s / static_cast<double>(K + 1);  // sum_{k>K+1} s/((k-1)k)
    for (std::size_t k = K + 1; k >= 1; --k) {
        tail += b.at(k) / static_cast<double>(k);
        if (k <= m) out[k - 1] = tail;
    }
    return Seq(std::move(out));
}

inline Seq apply_seq(OpTag tag, const Seq& a, std::size_t m_or_param = 1) {
    switch (tag) {
        case OpTag::C: return cesaro_seq(a, m_or_param);
        case OpTag::Cstar: return copson_seq(a, m_or_param);
        case OpTag::Majorant: return majorant_seq(a);
        case OpTag::DilateUp: return dilate_seq(a, DilateDir::Up, m_or_param);
        case OpTag::DilateDown: return dilate_seq(a, DilateDir::Down, m_or_param);
        case OpTag::Shift: return shift_seq(a, ShiftDir::Forward);
        case OpTag::CoShift: return shift_seq(a, ShiftDir::Backward);
        default: throw Error("apply_seq: operator not defined on sequences");
    }
}

}  // namespace ceslab
