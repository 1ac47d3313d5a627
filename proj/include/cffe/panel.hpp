#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cffe/types.hpp"

namespace cffe {

/// Sorted, duplicate-free row positions into a PanelDataset.
class RowSet {
  public:
    RowSet() = default;

    /// Throws InvalidArgument unless `rows` is strictly increasing.
    static RowSet from_sorted(std::vector<Index> rows);
    static RowSet from_unsorted(std::vector<Index> rows);
    static RowSet all(Index n);

    Index size() const noexcept { return static_cast<Index>(rows_.size()); }
    bool empty() const noexcept { return rows_.empty(); }
    Index operator[](Index k) const { return rows_[static_cast<std::size_t>(k)]; }
    auto begin() const noexcept { return rows_.begin(); }
    auto end() const noexcept { return rows_.end(); }
    std::span<const Index> span() const noexcept { return rows_; }
    const std::vector<Index>& vector() const noexcept { return rows_; }

    bool contains(Index row) const;

    friend bool operator==(const RowSet&, const RowSet&) = default;

  private:
    explicit RowSet(std::vector<Index> rows) : rows_(std::move(rows)) {}
    std::vector<Index> rows_;
};

RowSet set_union(const RowSet& a, const RowSet& b);
RowSet set_intersection(const RowSet& a, const RowSet& b);

/// Shape diagnostics. Reported, never acted on.
struct PanelValidation {
    bool balanced = true;
    Index singleton_units = 0;
    Index duplicate_cells = 0;
};

/// Immutable panel: covariates X (n x p), outcome y, binary treatment d and
/// categorical unit/time labels, re-encoded to dense codes in order of first
/// appearance.
class PanelDataset {
  public:
    PanelDataset(Matrix X, Vector y, Vector d, std::vector<std::string> unit_labels,
                 std::vector<std::string> time_labels, std::vector<std::string> covariate_names = {});

    PanelDataset(Matrix X, Vector y, Vector d, const std::vector<std::int64_t>& unit_ids,
                 const std::vector<std::int64_t>& time_ids);

    const Matrix& X() const noexcept { return X_; }
    const Vector& y() const noexcept { return y_; }
    const Vector& d() const noexcept { return d_; }

    Index n_obs() const noexcept { return y_.size(); }
    Index n_covariates() const noexcept { return X_.cols(); }
    Index n_units() const noexcept { return static_cast<Index>(unit_labels_.size()); }
    Index n_periods() const noexcept { return static_cast<Index>(time_labels_.size()); }

    std::span<const int> unit_codes() const noexcept { return unit_codes_; }
    std::span<const int> time_codes() const noexcept { return time_codes_; }
    int unit_code(Index row) const { return unit_codes_[static_cast<std::size_t>(row)]; }
    int time_code(Index row) const { return time_codes_[static_cast<std::size_t>(row)]; }

    const std::string& unit_label(int code) const { return unit_labels_[static_cast<std::size_t>(code)]; }
    const std::string& time_label(int code) const { return time_labels_[static_cast<std::size_t>(code)]; }
    /// Numeric value of a time label, when the label parses as a number.
    std::optional<double> time_value(int code) const { return time_values_[static_cast<std::size_t>(code)]; }

    std::span<const Index> unit_rows(int code) const { return unit_rows_[static_cast<std::size_t>(code)]; }
    std::span<const Index> time_rows(int code) const { return time_rows_[static_cast<std::size_t>(code)]; }

    const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
    const PanelValidation& validation() const noexcept { return validation_; }

    /// Same panel with a replaced outcome column.
    PanelDataset with_outcome(Vector y) const;

  private:
    Matrix X_;
    Vector y_;
    Vector d_;
    std::vector<int> unit_codes_;
    std::vector<int> time_codes_;
    std::vector<std::string> unit_labels_;
    std::vector<std::string> time_labels_;
    std::vector<std::optional<double>> time_values_;
    std::vector<std::vector<Index>> unit_rows_;
    std::vector<std::vector<Index>> time_rows_;
    std::vector<std::string> covariate_names_;
    PanelValidation validation_;
};

/// Column roles for CSV ingestion. Empty `covariates` selects columns named
/// x1, x2, ... when present, otherwise every column without a role. When
/// `first_treat` is set the treatment column is ignored and D is built as
/// 1{first_treat > 0 and time >= first_treat}.
struct ColumnSchema {
    std::string unit = "unit";
    std::string time = "time";
    std::string outcome = "y";
    std::string treatment = "d";
    std::vector<std::string> covariates;
    std::optional<std::string> first_treat;

    static ColumnSchema canonical() { return {}; }
    static ColumnSchema mpdta();
};

PanelDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema = {});

struct NamedColumn {
    std::string name;
    Vector values;
};

/// Writes the canonical layout unit,time,y,d,<covariates>[,extra...] with
/// round-trip exact numbers.
void write_csv(const PanelDataset& ds, const std::filesystem::path& path, const std::vector<NamedColumn>& extra = {});

/// Distinct unit codes present in `rows`, ascending.
std::vector<int> units_in(const PanelDataset& ds, const RowSet& rows);

/// All rows belonging to `units`.
RowSet rows_of_units(const PanelDataset& ds, std::span<const int> units);

/// Draws ceil(ratio * #units) units with replacement, deduplicates and returns
/// every row of the drawn units.
RowSet subsample_units(const PanelDataset& ds, double ratio, Rng& rng);

/// Partitions the units of `rows` into two groups, the first holding
/// floor(fraction * U) units clamped to [1, U-1]. Units are never split.
std::pair<RowSet, RowSet> split_units(const PanelDataset& ds, const RowSet& rows, double fraction, Rng& rng);

} // namespace cffe
