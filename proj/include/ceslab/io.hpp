#pragma once
// CSV I/O. PCFun files carry a "x,value" header and N+1 rows whose last
// value is ignored (it closes the grid); sequences are one value per line.

#include <fstream>
#include <sstream>

#include "ceslab/interpolation.hpp"
#include "ceslab/space.hpp"

namespace ceslab {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline PCFun read_pcfun_csv(std::istream& in, Domain dom) {
    std::string line;
    if (!std::getline(in, line)) throw Error("pcfun csv: empty file");
    if (trim(line) != "x,value") throw Error("pcfun csv: expected header \"x,value\"");
    std::vector<double> xs, vals;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t comma = t.find(',');
        if (comma == std::string::npos)
            throw Error("pcfun csv: missing comma on line " + std::to_string(lineno));
        try {
            xs.push_back(std::stod(t.substr(0, comma)));
            vals.push_back(std::stod(t.substr(comma + 1)));
        } catch (const std::exception&) {
            throw Error("pcfun csv: malformed number on line " + std::to_string(lineno));
        }
    }
    if (xs.size() < 2) throw Error("pcfun csv: need at least 2 rows");
    vals.pop_back();  // last row's value closes the grid
    return PCFun(dom, std::move(xs), std::move(vals));
}

inline void write_pcfun_csv(std::ostream& out, const PCFun& f) {
    out << "x,value\n";
    out.precision(17);
    for (std::size_t i = 0; i < f.cell_count(); ++i) out << f.xs[i] << "," << f.cells[i] << "\n";
    out << f.xs.back() << ",0\n";
}

inline Seq read_seq_csv(std::istream& in) {
    std::vector<double> v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        try {
            v.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw Error("seq csv: malformed number on line " + std::to_string(lineno));
        }
    }
    return Seq(std::move(v));
}

// Load the element for a space: PCFun files start with the "x,value" header,
// sequences are a single column. The domain tag comes from the descriptor.
inline Element read_element_for_space(const std::string& path, const SpaceDesc& space) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open input file: " + path);
    MeasureSpace ms = measure_space(space);
    if (ms.is_seq) return Element{read_seq_csv(in)};
    return Element{read_pcfun_csv(in, ms.domain)};
}

inline void write_kprofile_csv(std::ostream& out, const KProfile& p) {
    out << "t,K\n";
    out.precision(17);
    for (std::size_t i = 0; i < p.tGrid.size(); ++i)
        out << p.tGrid[i] << "," << p.kValues[i] << "\n";
}

}  // namespace ceslab
