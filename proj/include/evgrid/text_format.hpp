#pragma once

// Sectioned plain-text format shared by the grid case, fleet and scenario files.
//
//   # comment                       ('#' outside quotes starts a comment)
//   [section]
//   col_a  col_b   "col c"          first row of a table section names the columns
//   1      2.5     "two words"      following rows are records
//
//   [other]
//   key = value                     key/value sections instead hold one pair per line
//
// Tokens are separated by whitespace; double quotes group a token containing spaces.

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evgrid/error.hpp"

namespace evgrid::text {

struct Line {
    int number = 0;
    std::vector<std::string> tokens;
    std::string raw;  // comment-stripped, trimmed
};

struct Section {
    std::string name;
    int number = 0;
    std::vector<Line> lines;
};

struct Document {
    std::string source;
    std::vector<Section> sections;

    const Section* find(std::string_view name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return std::string(s.substr(0, i));
    }
    return std::string(s);
}

inline std::vector<std::string> tokenize(std::string_view s, const std::string& source, int line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        if (i >= s.size()) break;
        if (s[i] == '"') {
            const auto close = s.find('"', i + 1);
            if (close == std::string_view::npos) throw ParseError(source, line, "unterminated quote");
            out.emplace_back(s.substr(i + 1, close - i - 1));
            i = close + 1;
        } else {
            const auto start = i;
            while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
            out.emplace_back(s.substr(start, i - start));
        }
    }
    return out;
}

}  // namespace detail

inline Document parse(std::string_view content, std::string source = "<memory>") {
    Document doc;
    doc.source = std::move(source);
    std::istringstream in{std::string(content)};
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        const auto body = detail::trim(detail::strip_comment(raw));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3)
                throw ParseError(doc.source, number, "malformed section header '" + body + "'");
            doc.sections.push_back({detail::trim(body.substr(1, body.size() - 2)), number, {}});
            continue;
        }
        if (doc.sections.empty())
            throw ParseError(doc.source, number, "content before the first [section]");
        doc.sections.back().lines.push_back({number, detail::tokenize(body, doc.source, number), body});
    }
    return doc;
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

/// Table view over a section: first line is the header, the rest are records.
class Table {
public:
    Table(const Section& section, const std::string& source) : section_(&section), source_(source) {
        if (section.lines.empty()) throw ParseError(source, section.number, "[" + section.name + "] has no header row");
        const auto& header = section.lines.front().tokens;
        for (std::size_t i = 0; i < header.size(); ++i) columns_[header[i]] = i;
        for (std::size_t r = 1; r < section.lines.size(); ++r) {
            if (section.lines[r].tokens.size() != header.size())
                throw ParseError(source, section.lines[r].number,
                                 "expected " + std::to_string(header.size()) + " fields in [" + section.name +
                                     "], found " + std::to_string(section.lines[r].tokens.size()));
        }
    }

    std::size_t rows() const { return section_->lines.size() - 1; }
    int line_of(std::size_t row) const { return section_->lines[row + 1].number; }
    bool has(const std::string& column) const { return columns_.count(column) != 0; }

    void require(std::initializer_list<const char*> cols) const {
        for (const char* c : cols)
            if (!has(c)) throw ParseError(source_, section_->number, "[" + section_->name + "] is missing column '" + c + "'");
    }

    const std::string& str(std::size_t row, const std::string& column) const {
        const auto it = columns_.find(column);
        if (it == columns_.end())
            throw ParseError(source_, section_->number, "[" + section_->name + "] is missing column '" + column + "'");
        return section_->lines[row + 1].tokens[it->second];
    }

    double num(std::size_t row, const std::string& column) const {
        return to_double(str(row, column), line_of(row), column);
    }

    double num_or(std::size_t row, const std::string& column, double fallback) const {
        return has(column) ? num(row, column) : fallback;
    }

    int integer(std::size_t row, const std::string& column) const {
        const auto& s = str(row, column);
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (s.empty() || *end != '\0')
            throw ParseError(source_, line_of(row), "column '" + column + "': '" + s + "' is not an integer");
        return static_cast<int>(v);
    }

private:
    double to_double(const std::string& s, int line, const std::string& column) const {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0')
            throw ParseError(source_, line, "column '" + column + "': '" + s + "' is not a number");
        return v;
    }

    const Section* section_;
    std::string source_;
    std::map<std::string, std::size_t> columns_;
};

/// key = value view over a section.
class KeyValues {
public:
    KeyValues(const Section& section, const std::string& source) : source_(source) {
        for (const auto& line : section.lines) {
            const auto eq = line.raw.find('=');
            if (eq == std::string::npos) throw ParseError(source, line.number, "expected 'key = value'");
            auto key = detail::trim(std::string_view(line.raw).substr(0, eq));
            auto value = detail::trim(std::string_view(line.raw).substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
            if (values_.count(key)) throw ParseError(source, line.number, "duplicate key '" + key + "'");
            values_[key] = {value, line.number};
        }
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second.first;
    }
    int line_of(const std::string& key) const {
        const auto it = values_.find(key);
        return it == values_.end() ? 0 : it->second.second;
    }

    std::optional<double> number(const std::string& key) const {
        const auto v = get(key);
        if (!v) return std::nullopt;
        char* end = nullptr;
        const double d = std::strtod(v->c_str(), &end);
        if (v->empty() || *end != '\0') throw ParseError(source_, line_of(key), "'" + key + "': '" + *v + "' is not a number");
        return d;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : values_) out.push_back(k);
        return out;
    }

private:
    std::string source_;
    std::map<std::string, std::pair<std::string, int>> values_;
};

/// Quote a token for writing if it contains whitespace or a comment marker.
inline std::string quote(const std::string& token) {
    if (token.find_first_of(" \t#") == std::string::npos && !token.empty()) return token;
    return "\"" + token + "\"";
}

/// Split a comma-separated list ("4,5, 8") into trimmed items.
inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto item = detail::trim(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace evgrid::text
