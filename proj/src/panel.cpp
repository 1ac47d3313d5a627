#include "cffe/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <unordered_map>

#include "cffe/csv.hpp"
#include "cffe/error.hpp"

namespace cffe {

// --- RowSet -----------------------------------------------------------------

RowSet RowSet::from_sorted(std::vector<Index> rows)
{
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k] <= rows[k - 1])
            throw Error(ErrorKind::InvalidArgument, "row set must be strictly increasing");
    if (!rows.empty() && rows.front() < 0)
        throw Error(ErrorKind::InvalidArgument, "row set contains a negative row");
    return RowSet(std::move(rows));
}

RowSet RowSet::from_unsorted(std::vector<Index> rows)
{
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return from_sorted(std::move(rows));
}

RowSet RowSet::all(Index n)
{
    std::vector<Index> rows(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k)
        rows[static_cast<std::size_t>(k)] = k;
    return RowSet(std::move(rows));
}

bool RowSet::contains(Index row) const { return std::binary_search(rows_.begin(), rows_.end(), row); }

RowSet set_union(const RowSet& a, const RowSet& b)
{
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(a.size() + b.size()));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return RowSet::from_sorted(std::move(out));
}

RowSet set_intersection(const RowSet& a, const RowSet& b)
{
    std::vector<Index> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return RowSet::from_sorted(std::move(out));
}

// --- PanelDataset -------------------------------------------------------------

namespace {

std::vector<int> encode(const std::vector<std::string>& labels, std::vector<std::string>& distinct)
{
    std::unordered_map<std::string, int> index;
    std::vector<int> codes;
    codes.reserve(labels.size());
    for (const auto& label : labels) {
        auto [it, inserted] = index.try_emplace(label, static_cast<int>(distinct.size()));
        if (inserted)
            distinct.push_back(label);
        codes.push_back(it->second);
    }
    return codes;
}

std::vector<std::vector<Index>> group_rows(const std::vector<int>& codes, std::size_t n_groups)
{
    std::vector<std::vector<Index>> rows(n_groups);
    for (std::size_t r = 0; r < codes.size(); ++r)
        rows[static_cast<std::size_t>(codes[r])].push_back(static_cast<Index>(r));
    return rows;
}

std::vector<std::string> to_labels(const std::vector<std::int64_t>& ids)
{
    std::vector<std::string> labels;
    labels.reserve(ids.size());
    for (auto id : ids)
        labels.push_back(std::to_string(id));
    return labels;
}

} // namespace

PanelDataset::PanelDataset(Matrix X, Vector y, Vector d, const std::vector<std::int64_t>& unit_ids,
                           const std::vector<std::int64_t>& time_ids)
    : PanelDataset(std::move(X), std::move(y), std::move(d), to_labels(unit_ids), to_labels(time_ids))
{
}

PanelDataset::PanelDataset(Matrix X, Vector y, Vector d, std::vector<std::string> unit_labels,
                           std::vector<std::string> time_labels, std::vector<std::string> covariate_names)
    : X_(std::move(X)), y_(std::move(y)), d_(std::move(d)), covariate_names_(std::move(covariate_names))
{
    const Index n = y_.size();
    if (X_.rows() != n || d_.size() != n || static_cast<Index>(unit_labels.size()) != n ||
        static_cast<Index>(time_labels.size()) != n)
        throw Error(ErrorKind::LengthMismatch, "panel columns must all have length " + std::to_string(n));
    if (n < 4)
        throw Error(ErrorKind::InvalidPanel, "a panel needs at least 4 observations, got " + std::to_string(n));
    if (X_.cols() < 1)
        throw Error(ErrorKind::InvalidPanel, "a panel needs at least one covariate");
    if (!X_.allFinite() || !y_.allFinite() || !d_.allFinite())
        throw Error(ErrorKind::InvalidPanel, "panel contains missing or non-finite values");
    for (Index r = 0; r < n; ++r)
        if (d_(r) != 0.0 && d_(r) != 1.0)
            throw Error(ErrorKind::TreatmentNotBinary,
                        "observation " + std::to_string(r) + " has treatment " + csv::format_number(d_(r)));

    if (covariate_names_.empty())
        for (Index j = 0; j < X_.cols(); ++j)
            covariate_names_.push_back("x" + std::to_string(j + 1));
    if (static_cast<Index>(covariate_names_.size()) != X_.cols())
        throw Error(ErrorKind::LengthMismatch, "covariate name count does not match X width");

    unit_codes_ = encode(unit_labels, unit_labels_);
    time_codes_ = encode(time_labels, time_labels_);
    if (unit_labels_.size() < 2 || time_labels_.size() < 2)
        throw Error(ErrorKind::InvalidPanel, "a panel needs at least 2 units and 2 periods");

    for (const auto& label : time_labels_)
        time_values_.push_back(csv::parse_number(label));
    unit_rows_ = group_rows(unit_codes_, unit_labels_.size());
    time_rows_ = group_rows(time_codes_, time_labels_.size());

    const auto n_periods = static_cast<Index>(time_labels_.size());
    std::vector<char> seen(unit_labels_.size() * time_labels_.size(), 0);
    for (std::size_t r = 0; r < unit_codes_.size(); ++r) {
        auto& cell = seen[static_cast<std::size_t>(unit_codes_[r]) * time_labels_.size() +
                          static_cast<std::size_t>(time_codes_[r])];
        if (cell)
            ++validation_.duplicate_cells;
        cell = 1;
    }
    for (const auto& rows : unit_rows_) {
        if (rows.size() == 1)
            ++validation_.singleton_units;
        if (static_cast<Index>(rows.size()) != n_periods)
            validation_.balanced = false;
    }
    if (validation_.duplicate_cells > 0)
        validation_.balanced = false;
}

PanelDataset PanelDataset::with_outcome(Vector y) const
{
    if (y.size() != n_obs())
        throw Error(ErrorKind::LengthMismatch, "replacement outcome has the wrong length");
    PanelDataset copy = *this;
    if (!y.allFinite())
        throw Error(ErrorKind::InvalidPanel, "replacement outcome contains non-finite values");
    copy.y_ = std::move(y);
    return copy;
}

// --- CSV ------------------------------------------------------------------------

ColumnSchema ColumnSchema::mpdta()
{
    ColumnSchema schema;
    schema.unit = "countyreal";
    schema.time = "year";
    schema.outcome = "lemp";
    schema.treatment = "";
    schema.covariates = {"lpop"};
    schema.first_treat = "first.treat";
    return schema;
}

PanelDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema)
{
    const csv::Table table = csv::read(path);

    auto require = [&](const std::string& name) {
        auto col = table.column(name);
        if (!col)
            throw Error(ErrorKind::MissingColumn, "'" + path.string() + "' has no column '" + name + "'");
        return *col;
    };
    const std::size_t unit_col = require(schema.unit);
    const std::size_t time_col = require(schema.time);
    const std::size_t y_col = require(schema.outcome);
    std::optional<std::size_t> d_col, first_treat_col;
    if (schema.first_treat)
        first_treat_col = require(*schema.first_treat);
    else
        d_col = require(schema.treatment);

    std::vector<std::size_t> x_cols;
    if (!schema.covariates.empty()) {
        for (const auto& name : schema.covariates)
            x_cols.push_back(require(name));
    } else {
        static const std::regex numbered("x[0-9]+");
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (std::regex_match(table.header[j], numbered))
                x_cols.push_back(j);
        if (x_cols.empty()) {
            for (std::size_t j = 0; j < table.header.size(); ++j)
                if (j != unit_col && j != time_col && j != y_col && j != d_col && j != first_treat_col)
                    x_cols.push_back(j);
        }
        if (x_cols.empty())
            throw Error(ErrorKind::MissingColumn, "'" + path.string() + "' has no covariate columns");
    }

    const auto n = static_cast<Index>(table.rows.size());
    const auto p = static_cast<Index>(x_cols.size());
    Matrix X(n, p);
    Vector y(n), d(n);
    std::vector<std::string> units, times, names;
    units.reserve(table.rows.size());
    times.reserve(table.rows.size());
    for (auto j : x_cols)
        names.push_back(table.header[j]);

    for (Index r = 0; r < n; ++r) {
        const auto row = static_cast<std::size_t>(r);
        units.push_back(table.rows[row][unit_col]);
        times.push_back(table.rows[row][time_col]);
        y(r) = csv::number_at(table, row, y_col);
        for (Index j = 0; j < p; ++j)
            X(r, j) = csv::number_at(table, row, x_cols[static_cast<std::size_t>(j)]);
        if (first_treat_col) {
            const double first = csv::number_at(table, row, *first_treat_col);
            const double t = csv::number_at(table, row, time_col);
            d(r) = (first > 0.0 && t >= first) ? 1.0 : 0.0;
        } else {
            d(r) = csv::number_at(table, row, *d_col);
            if (d(r) != 0.0 && d(r) != 1.0)
                throw Error(ErrorKind::TreatmentNotBinary, "row " + std::to_string(r + 2) + ", column '" +
                                                               table.header[*d_col] + "': treatment value '" +
                                                               table.rows[row][*d_col] + "' is not 0 or 1");
        }
    }
    return PanelDataset(std::move(X), std::move(y), std::move(d), std::move(units), std::move(times),
                        std::move(names));
}

void write_csv(const PanelDataset& ds, const std::filesystem::path& path, const std::vector<NamedColumn>& extra)
{
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    for (const auto& col : extra)
        if (col.values.size() != ds.n_obs())
            throw Error(ErrorKind::LengthMismatch, "extra column '" + col.name + "' has the wrong length");

    out << "unit,time,y,d";
    for (const auto& name : ds.covariate_names())
        out << ',' << name;
    for (const auto& col : extra)
        out << ',' << col.name;
    out << '\n';
    for (Index r = 0; r < ds.n_obs(); ++r) {
        out << ds.unit_label(ds.unit_code(r)) << ',' << ds.time_label(ds.time_code(r)) << ','
            << csv::format_number(ds.y()(r)) << ',' << csv::format_number(ds.d()(r));
        for (Index j = 0; j < ds.n_covariates(); ++j)
            out << ',' << csv::format_number(ds.X()(r, j));
        for (const auto& col : extra)
            out << ',' << csv::format_number(col.values(r));
        out << '\n';
    }
    if (!out)
        throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

// --- Sampling -------------------------------------------------------------------

std::vector<int> units_in(const PanelDataset& ds, const RowSet& rows)
{
    std::vector<int> units;
    units.reserve(static_cast<std::size_t>(rows.size()));
    for (Index r : rows)
        units.push_back(ds.unit_code(r));
    std::sort(units.begin(), units.end());
    units.erase(std::unique(units.begin(), units.end()), units.end());
    return units;
}

RowSet rows_of_units(const PanelDataset& ds, std::span<const int> units)
{
    std::vector<Index> rows;
    for (int u : units) {
        auto unit_rows = ds.unit_rows(u);
        rows.insert(rows.end(), unit_rows.begin(), unit_rows.end());
    }
    return RowSet::from_unsorted(std::move(rows));
}

RowSet subsample_units(const PanelDataset& ds, double ratio, Rng& rng)
{
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "subsample ratio must lie in (0, 1]");
    const Index n_units = ds.n_units();
    // ceil with a guard so that e.g. 0.5 * 200 stays 100
    const auto n_draws =
        std::max<Index>(1, static_cast<Index>(std::ceil(ratio * static_cast<double>(n_units) - 1e-9)));
    std::uniform_int_distribution<int> pick(0, static_cast<int>(n_units) - 1);
    std::vector<int> drawn;
    drawn.reserve(static_cast<std::size_t>(n_draws));
    for (Index k = 0; k < n_draws; ++k)
        drawn.push_back(pick(rng));
    std::sort(drawn.begin(), drawn.end());
    drawn.erase(std::unique(drawn.begin(), drawn.end()), drawn.end());
    return rows_of_units(ds, drawn);
}

std::pair<RowSet, RowSet> split_units(const PanelDataset& ds, const RowSet& rows, double fraction, Rng& rng)
{
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error(ErrorKind::InvalidArgument, "split fraction must lie in (0, 1)");
    std::vector<int> units = units_in(ds, rows);
    const auto n_units = static_cast<Index>(units.size());
    if (n_units < 2)
        throw Error(ErrorKind::TooFewUnits, "cannot split " + std::to_string(n_units) + " unit(s) into two groups");

    std::shuffle(units.begin(), units.end(), rng);
    const Index first = std::clamp<Index>(static_cast<Index>(std::floor(fraction * static_cast<double>(n_units))), 1,
                                          n_units - 1);
    std::vector<char> in_first(static_cast<std::size_t>(ds.n_units()), 0);
    for (Index k = 0; k < first; ++k)
        in_first[static_cast<std::size_t>(units[static_cast<std::size_t>(k)])] = 1;

    std::vector<Index> a, b;
    for (Index r : rows)
        (in_first[static_cast<std::size_t>(ds.unit_code(r))] ? a : b).push_back(r);
    return {RowSet::from_sorted(std::move(a)), RowSet::from_sorted(std::move(b))};
}

} // namespace cffe
