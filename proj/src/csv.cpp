#include "cffe/csv.hpp"

#include <charconv>
#include <fstream>

#include "cffe/error.hpp"

namespace cffe::csv {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace

std::optional<std::size_t> Table::column(std::string_view name) const
{
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name)
            return j;
    return std::nullopt;
}

std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.emplace_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.emplace_back(trim(cell));
    return cells;
}

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");

    Table table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        if (!have_header) {
            // UTF-8 byte order mark
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
                line.erase(0, 3);
            table.header = split_line(line);
            have_header = true;
            continue;
        }
        auto cells = split_line(line);
        if (cells.size() != table.header.size())
            throw Error(ErrorKind::InvalidPanel, path.string() + " line " + std::to_string(line_no) + ": expected " +
                                                     std::to_string(table.header.size()) + " cells, found " +
                                                     std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    if (!have_header || table.rows.empty())
        throw Error(ErrorKind::EmptyFile, "'" + path.string() + "' has no data rows");
    return table;
}

std::optional<double> parse_number(std::string_view cell)
{
    cell = trim(cell);
    if (cell.empty())
        return std::nullopt;
    if (cell.front() == '+')
        cell.remove_prefix(1);
    double value = 0.0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || end != cell.data() + cell.size())
        return std::nullopt;
    return value;
}

std::string format_number(double value)
{
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, end);
}

double number_at(const Table& table, std::size_t row, std::size_t col)
{
    auto value = parse_number(table.rows[row][col]);
    if (!value)
        throw Error(ErrorKind::NonNumericCell, "row " + std::to_string(row + 2) + ", column '" + table.header[col] +
                                                   "': cannot parse '" + table.rows[row][col] + "' as a number");
    return *value;
}

} // namespace cffe::csv
