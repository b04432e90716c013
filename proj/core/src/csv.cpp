#include "ceda/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ceda/error.hpp"

namespace ceda::csv {

Document read(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> lines;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        const bool blank = record.size() == 1 && record.front().empty() && !field_quoted;
        if (!blank) {
            records.push_back(std::move(record));
            lines.push_back(record_line);
        }
        record.clear();
        field_quoted = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                field_quoted = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes) throw_data("unterminated quoted field starting on line " + std::to_string(record_line));
    if (!field.empty() || !record.empty() || field_quoted) end_record();

    Document doc;
    if (records.empty()) return doc;
    doc.header = std::move(records.front());
    doc.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    doc.line_numbers.assign(lines.begin() + 1, lines.end());
    return doc;
}

Document read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("cannot open file '" + path + "'");
    return read(in);
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

std::string format_double(double value) {
    if (std::isnan(value)) return {};
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw_computation("failed to format number");
    return std::string(buf, end);
}

std::string format_fixed(double value, int digits) {
    if (std::isnan(value)) return {};
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, digits);
    if (ec != std::errc{}) throw_computation("failed to format number");
    std::string s(buf, end);
    // "-0.000" reads badly in tables
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::optional<double> parse_double(std::string_view field) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    if (field.empty()) return std::nullopt;
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) return std::nullopt;
    return value;
}

}  // namespace ceda::csv
