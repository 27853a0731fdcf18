#include "streamst/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "streamst/error.hpp"

namespace streamst::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        auto begin = cell.find_first_not_of(" \t\r");
        auto end = cell.find_last_not_of(" \t\r");
        cells.push_back(begin == std::string::npos ? std::string{} : cell.substr(begin, end - begin + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::optional<std::size_t> Table::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

std::size_t Table::column(std::string_view name) const {
    auto idx = find_column(name);
    if (!idx) throw input_error("missing column '" + std::string(name) + "'");
    return *idx;
}

Table read(std::istream& in, const std::string& source_name) {
    Table table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line) || line[0] == '#') continue;
        auto cells = split_line(line);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw input_error(source_name + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header.size()) + " fields, got " +
                              std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    if (!have_header) throw input_error(source_name + ": empty file");
    return table;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read(in, path);
}

double to_double(const std::string& cell, const std::string& context) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
        throw input_error(context + ": not a number '" + cell + "'");
    return value;
}

int to_int(const std::string& cell, const std::string& context) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
        throw input_error(context + ": not an integer '" + cell + "'");
    return value;
}

std::optional<double> to_optional_double(const std::string& cell, const std::string& context) {
    if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN") return std::nullopt;
    return to_double(cell, context);
}

std::string format(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << cells[i];
    }
    out << '\n';
}

}  // namespace streamst::csv
