#pragma once

// CSV reading and writing for datasets and daily returns. Numbers are written
// with 17 significant digits so values round-trip exactly.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "forecast.hpp"
#include "linalg.hpp"

namespace midas {

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError(where + ": not a number: '" + s + "'");
    }
    if (used != s.size()) throw DataError(where + ": not a number: '" + s + "'");
    return v;
}

/// Writes a matrix with a header row of column names.
inline void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header)
{
    if (static_cast<Eigen::Index>(header.size()) != m.cols())
        throw DimensionError("write_matrix_csv: header has " + std::to_string(header.size()) + " names for " +
                             std::to_string(m.cols()) + " columns");
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    for (std::size_t c = 0; c < header.size(); ++c) f << (c ? "," : "") << header[c];
    f << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) f << (c ? "," : "") << format_double(m(r, c));
        f << '\n';
    }
    if (!f) throw DataError("write to '" + path + "' failed");
}

/// Reads a numeric CSV with one header row; every row must have the same width.
inline Matrix read_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr)
{
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("'" + path + "' is empty");
    const auto names = split_csv_line(line);
    if (header) *header = names;
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(rows + 2);
        if (fields.size() != names.size())
            throw DataError(where + ": expected " + std::to_string(names.size()) + " fields, got " +
                            std::to_string(fields.size()));
        for (const auto& s : fields) values.push_back(parse_double(s, where));
        ++rows;
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < names.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * names.size() + c];
    return m;
}

/// Daily returns CSV with header "date,return".
inline DailyReturns read_daily_returns_csv(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("'" + path + "' is empty");
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "date" || header[1] != "return")
        throw DataError(path + ": expected header 'date,return'");
    DailyReturns out;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (fields.size() != 2) throw DataError(where + ": expected 2 fields");
        try {
            out.dates.push_back(parse_date(fields[0]));
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        out.returns.push_back(parse_double(fields[1], where));
    }
    out.validate();
    return out;
}

inline void write_daily_returns_csv(const std::string& path, const DailyReturns& daily)
{
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << "date,return\n";
    for (std::size_t i = 0; i < daily.size(); ++i) f << format_date(daily.dates[i]) << ',' << format_double(daily.returns[i]) << '\n';
    if (!f) throw DataError("write to '" + path + "' failed");
}

} // namespace midas
