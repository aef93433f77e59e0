#pragma once

#include <istream>
#include <string>
#include <vector>

#include "hmf/errors.hpp"

namespace hmf::csv {

// RFC-4180-ish reader: comma delimiter, double-quote escaping, CR/LF line
// ends. Lines starting with '#' outside of any record are treated as
// comments. Returns one vector of fields per row; blank lines are skipped.
inline std::vector<std::vector<std::string>> read(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    bool row_started = false;

    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (row.size() == 1 && row[0].empty()) {
            // blank line
        } else if (!row.empty() && !row[0].empty() && row[0][0] == '#') {
            // comment line
        } else {
            rows.push_back(row);
        }
        row.clear();
        row_started = false;
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field_started) {
                in_quotes = true;
                field_started = true;
                row_started = true;
            } else {
                field += c; // stray quote mid-field, keep literally
            }
            break;
        case ',':
            end_field();
            row_started = true;
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            break;
        default:
            field += c;
            field_started = true;
            row_started = true;
            break;
        }
    }
    if (in_quotes) throw DataError("csv: unterminated quoted field");
    if (row_started || field_started || !row.empty()) end_row();
    return rows;
}

inline std::string escape(const std::string& s) {
    bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

} // namespace hmf::csv
