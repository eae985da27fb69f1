#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace qnndyn {

// Numeric CSV writer. Values are printed with %.17g so doubles survive a
// write/read round trip bit-exactly; that is what makes `verify` able to
// recompute aggregates from the files alone.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    void header(const std::vector<std::string>& names);
    void row(const std::vector<double>& values);

private:
    std::ofstream out_;
    std::size_t cols_ = 0;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;  // column-major, data[c][r]

    std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
    const std::vector<double>& col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

std::string format_double(double v);  // %.17g

}  // namespace qnndyn
