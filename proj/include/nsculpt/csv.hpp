#pragma once

// RFC-4180 CSV reading and writing. Doubles are written in their shortest
// round-trip form so emitted files are byte-stable across platforms.

#include <string>
#include <string_view>
#include <vector>

namespace nsculpt {

std::string format_double(double v);

// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view s);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    // Throws DimensionError if the row width differs from the header.
    void add(std::vector<std::string> row);

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

    std::string str() const;  // CRLF line endings per RFC-4180

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Parses CSV text (quoted fields, embedded separators and newlines).
// Throws FormatError on malformed quoting.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace nsculpt
