#include "cli/csv.hpp"

#include <charconv>

namespace eptest::cli {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            cells.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

}  // namespace

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw InputError(line_no, "expected " + std::to_string(table.header.size()) + " cells, found " +
                                          std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw InputError(1, "missing header line");
    return table;
}

std::optional<double> parse_real_cell(std::string_view cell, std::size_t line, std::string_view column) {
    if (cell.empty()) return std::nullopt;
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+') ++first;  // from_chars rejects a leading '+'
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw InputError(line, "cannot parse " + std::string(column) + " value '" + std::string(cell) + "'");
    return value;
}

}  // namespace eptest::cli
