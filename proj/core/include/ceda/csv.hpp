#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ceda::csv {

/// One parsed CSV file. `header` is the first record; `rows` hold the
/// remaining records together with their 1-based line numbers.
struct Document {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

/// RFC 4180 reader: comma separator, double-quote quoting with "" escapes,
/// LF or CRLF line ends, optional UTF-8 BOM. Blank lines are skipped.
Document read(std::istream& in);
Document read_file(const std::string& path);

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal text that parses back to the identical double
/// (std::to_chars round-trip form). NaN is written as an empty field.
std::string format_double(double value);

/// Fixed-point text with `digits` decimals, used for human-facing tables.
std::string format_fixed(double value, int digits);

/// Strict parse of a whole field as a finite or non-finite double; leading
/// and trailing blanks are ignored, anything else makes it fail.
std::optional<double> parse_double(std::string_view field);

}  // namespace ceda::csv
