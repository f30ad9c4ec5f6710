#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crashscen {

/// In-memory CSV table with a required header row (RFC-4180 quoting).
class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> header);

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    std::size_t cols() const { return header_.size(); }

    bool has_column(std::string_view name) const;
    /// Throws MissingColumn.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;

    const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
    const std::string& at(std::size_t row, std::size_t col) const { return rows_[row][col]; }

    void add_row(std::vector<std::string> row);

    static Table parse(std::string_view text, const std::string& source = "<memory>");
    static Table read(const std::filesystem::path& path);
    void write(std::ostream& out) const;
    void write(const std::filesystem::path& path) const;
    std::string to_string() const;

private:
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::string>> rows_;
};

/// Raw CSV records of varying width (RFC-4180 quoting).
std::vector<std::vector<std::string>> parse_records(std::string_view text, const std::string& source = "<memory>");

/// Quotes a field only when it contains a delimiter, quote or newline.
std::string csv_escape(std::string_view field);

/// Parses a base-10 integer field; std::nullopt on empty or malformed input.
std::optional<long long> parse_int(std::string_view s);
std::optional<double> parse_double(std::string_view s);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

}  // namespace crashscen
