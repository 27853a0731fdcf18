#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace streamst::csv {

/// Header plus string cells; no quoting (all files here are numeric or plain identifiers).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a named column; throws input-error when absent.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;
};

Table read(std::istream& in, const std::string& source_name = "<stream>");
Table read_file(const std::string& path);

double to_double(const std::string& cell, const std::string& context);
int to_int(const std::string& cell, const std::string& context);
/// Empty or NA cells become nullopt.
std::optional<double> to_optional_double(const std::string& cell, const std::string& context);

/// Shortest round-trippable formatting, locale independent.
std::string format(double value);

void write_row(std::ostream& out, const std::vector<std::string>& cells);

}  // namespace streamst::csv
