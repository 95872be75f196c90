#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "penmcfm/dataset.hpp"
#include "penmcfm/util.hpp"

namespace penmcfm {

// Shortest round-trip decimal representation, locale independent.
inline std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    // prefer the shortest representation that still round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
        if (std::strtod(shorter, nullptr) == x) return shorter;
    }
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// Header row required; every cell must parse as a finite number. Missing
// values are a parse error by contract.
inline RawTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open CSV file: " + path);
    RawTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CSV file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.columns = split_csv_line(line);
    if (table.columns.empty()) throw Error("CSV header has no columns: " + path);

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != table.columns.size()) {
            throw Error(path + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(table.columns.size()) +
                        " cells, got " + std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (cells[j].empty()) {
                throw Error(path + ":" + std::to_string(line_no) +
                            ": missing value in column " + table.columns[j]);
            }
            char* end = nullptr;
            row[j] = std::strtod(cells[j].c_str(), &end);
            if (end == cells[j].c_str() || *end != '\0') {
                throw Error(path + ":" + std::to_string(line_no) +
                            ": cannot parse '" + cells[j] + "' in column " +
                            table.columns[j]);
            }
        }
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            table.values(static_cast<Eigen::Index>(i),
                         static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return table;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path) : out_(path)
    {
        if (!out_) throw Error("cannot open for writing: " + path);
    }

    void header(const std::vector<std::string>& names) { row_of_strings(names); }

    void row_of_strings(const std::vector<std::string>& cells)
    {
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) out_ << ',';
            out_ << cells[j];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& cells)
    {
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) out_ << ',';
            out_ << format_double(cells[j]);
        }
        out_ << '\n';
    }

    // first cell textual, remaining numeric
    void row(const std::string& label, const std::vector<double>& cells)
    {
        out_ << label;
        for (const double c : cells) out_ << ',' << format_double(c);
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

}  // namespace penmcfm
