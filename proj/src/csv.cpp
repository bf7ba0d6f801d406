#include "fusion/csv.hpp"

#include "fusion/error.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace fusion {

namespace {

using Record = std::vector<std::string>;

// Splits the whole stream into records; `lines` receives the 1-based line on
// which each record starts.
std::vector<Record> tokenize(std::istream& in, const std::string& origin, std::vector<std::size_t>& lines)
{
    std::vector<Record> records;
    Record record;
    std::string field;
    bool quoted = false;       // inside quotes
    bool was_quoted = false;   // current field opened with a quote
    bool any = false;          // current record has content
    std::size_t line = 1;
    std::size_t record_line = 1;

    const auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        was_quoted = false;
    };
    const auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record.front().empty() && !any)) {
            records.push_back(std::move(record));
            lines.push_back(record_line);
        }
        record.clear();
        any = false;
        record_line = line;
    };

    char c = 0;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field.empty() || was_quoted)
                throw Error(ErrorKind::Data, fmt::format("{}:{}: stray quote inside a field", origin, line));
            quoted = was_quoted = any = true;
            break;
        case ',':
            any = true;
            end_field();
            break;
        case '\r':
            if (in.peek() != '\n') throw Error(ErrorKind::Data, fmt::format("{}:{}: bare carriage return", origin, line));
            break;
        case '\n':
            ++line;
            end_record();
            break;
        default:
            if (was_quoted)
                throw Error(ErrorKind::Data, fmt::format("{}:{}: text after closing quote", origin, line));
            any = true;
            field.push_back(c);
        }
    }
    if (quoted) throw Error(ErrorKind::Data, fmt::format("{}: unterminated quoted field", origin));
    if (any || !field.empty()) end_record();
    return records;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

}  // namespace

Table parse_csv(std::istream& in, const std::string& origin)
{
    std::vector<std::size_t> lines;
    const auto records = tokenize(in, origin, lines);
    if (records.empty()) throw Error(ErrorKind::Data, fmt::format("{}: no header row", origin));

    Table table;
    std::set<std::string> seen;
    for (const auto& raw : records.front()) {
        std::string name(trim(raw));
        if (name.empty()) throw Error(ErrorKind::Data, fmt::format("{}: empty column name in header", origin));
        if (!seen.insert(name).second)
            throw Error(ErrorKind::Data, fmt::format("{}: duplicate column '{}'", origin, name));
        table.add(std::move(name), {});
    }

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != table.columns.size())
            throw Error(ErrorKind::Data, fmt::format("{}:{}: expected {} fields, found {}", origin, lines[r],
                                                     table.columns.size(), rec.size()));
        for (std::size_t c = 0; c < rec.size(); ++c) {
            const auto text = trim(rec[c]);
            auto& cells = table.columns[c].cells;
            if (text.empty() || text == "NA") {
                cells.emplace_back();
                continue;
            }
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || ptr != text.data() + text.size())
                throw Error(ErrorKind::Data, fmt::format("{}:{}: column '{}' holds non-numeric value '{}'", origin,
                                                         lines[r], table.columns[c].name, text));
            cells.emplace_back(value);
        }
    }
    return table;
}

Table read_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Config, fmt::format("cannot open '{}'", path));
    return parse_csv(in, path);
}

namespace {

std::string quote_if_needed(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

void write_csv(std::ostream& out, const Table& table)
{
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << quote_if_needed(table.columns[c].name);
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (c) out << ',';
            const auto& cell = table.columns[c].cells[r];
            out << (cell ? fmt::format("{:.17g}", *cell) : std::string("NA"));
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const Table& table)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Config, fmt::format("cannot write '{}'", path));
    write_csv(out, table);
}

}  // namespace fusion
