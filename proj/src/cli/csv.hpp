#pragma once
// Minimal CSV reading/writing for the command-line front-end. Cells are
// split on commas without quoting support; numbers use '.' as the decimal
// separator regardless of locale.

#include "eptest/core.hpp"

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eptest::cli {

// Input problem tied to a 1-based line number of the input file.
class InputError : public Error {
public:
    InputError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based, parallel to rows

    // Column index by name, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const;
};

// Blank lines are skipped; every row must have as many cells as the header.
CsvTable read_csv(std::istream& in);

// Empty cell -> nullopt. Accepts "inf"/"infinity". Throws InputError on
// anything that is not a complete real number.
std::optional<double> parse_real_cell(std::string_view cell, std::size_t line, std::string_view column);

std::string trim(std::string_view s);

}  // namespace eptest::cli
