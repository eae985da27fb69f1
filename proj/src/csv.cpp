#include "qnndyn/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace qnndyn {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open CSV for writing: " + path);
}

void CsvWriter::header(const std::vector<std::string>& names) {
    cols_ = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out_ << ',';
        out_ << names[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != cols_) {
        throw std::runtime_error("CSV row width does not match the header");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out_ << ',';
        out_ << format_double(values[i]);
    }
    out_ << '\n';
}

const std::vector<double>& CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return data[i];
    }
    throw std::runtime_error("CSV column not found: " + name);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV for reading: " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
    t.data.resize(t.columns.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::size_t c = 0;
        while (std::getline(ls, cell, ',')) {
            if (c >= t.columns.size()) throw std::runtime_error("ragged CSV row in " + path);
            t.data[c++].push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (c != t.columns.size()) throw std::runtime_error("ragged CSV row in " + path);
    }
    return t;
}

}  // namespace qnndyn
