#include "dosebound/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dosebound/errors.hpp"

namespace dosebound::csv {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& cell, std::size_t line_no) {
    if (cell == "nan" || cell == "NaN") return std::nan("");
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw UsageError("csv: non-numeric cell '" + cell + "' on line " + std::to_string(line_no));
    }
    return value;
}

}  // namespace

std::size_t Table::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw UsageError("csv: missing column '" + name + "'");
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("csv: cannot open " + path.string());
    Table table;
    std::string line;
    if (!std::getline(in, line)) throw UsageError("csv: " + path.string() + " is empty");
    table.header = split(line);
    if (table.header.empty()) throw UsageError("csv: header row is empty");
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != table.header.size()) {
            throw UsageError("csv: line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(table.header.size()));
        }
        for (const auto& c : cells) values.push_back(parse_double(c, line_no));
        ++rows;
    }
    table.values.rows = rows;
    table.values.cols = table.header.size();
    table.values.data = std::move(values);
    return table;
}

std::string to_string(const Table& table) {
    std::string out;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j) out += ',';
        out += table.header[j];
    }
    out += '\n';
    for (std::size_t i = 0; i < table.values.rows; ++i) {
        for (std::size_t j = 0; j < table.values.cols; ++j) {
            if (j) out += ',';
            out += format_double(table.values(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write " + tmp.string());
        out << contents;
        if (!out) throw UsageError("failed while writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace dosebound::csv
