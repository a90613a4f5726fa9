// csv.hpp - RFC 4180 tables.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace blendreg {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws InputError when absent.
    std::size_t column(const std::string &name) const;
};

/// Quotes a field when it holds a comma, quote, CR or LF.
std::string csv_escape(const std::string &field);
void write_csv_row(std::ostream &out, const std::vector<std::string> &fields);
void write_csv(const std::string &path, const CsvTable &table);

CsvTable parse_csv(const std::string &text);
CsvTable read_csv(const std::string &path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

} // namespace blendreg
