#include "cffe/panel.hpp"

#include <set>

#include <gtest/gtest.h>

#include "cffe/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cffe {
namespace {

using testing::TempDir;
using testing::write_file;

ErrorKind kind_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorKind::InvalidArgument;
}

PanelDataset grid_panel(int units, int periods, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const Index n = units * periods;
    Matrix X(n, 2);
    Vector y(n), d(n);
    std::vector<std::int64_t> u(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
        u[static_cast<std::size_t>(r)] = r / periods;
        t[static_cast<std::size_t>(r)] = r % periods;
        X(r, 0) = normal(rng);
        X(r, 1) = normal(rng);
        y(r) = normal(rng);
        d(r) = (r % 3 == 0) ? 1.0 : 0.0;
    }
    return PanelDataset(X, y, d, u, t);
}

TEST(LoadCsv, MinimalPanel)
{
    TempDir dir;
    write_file(dir / "p.csv", "unit,time,y,d,x1\n1,1,0.5,0,1.0\n1,2,0.7,1,1.0\n2,1,0.1,0,2.0\n2,2,0.2,0,2.0\n");
    const PanelDataset ds = load_csv(dir / "p.csv");
    EXPECT_EQ(ds.n_obs(), 4);
    EXPECT_EQ(ds.n_covariates(), 1);
    EXPECT_EQ(ds.n_units(), 2);
    EXPECT_EQ(ds.n_periods(), 2);
    EXPECT_TRUE(ds.validation().balanced);
    EXPECT_DOUBLE_EQ(ds.y()(1), 0.7);
    EXPECT_EQ(ds.covariate_names(), std::vector<std::string>{"x1"});
}

TEST(LoadCsv, NonBinaryTreatmentNamesRow)
{
    TempDir dir;
    write_file(dir / "p.csv", "unit,time,y,d,x1\n1,1,0.5,0,1\n1,2,0.7,0.5,1\n2,1,0.1,0,2\n2,2,0.2,0,2\n");
    try {
        load_csv(dir / "p.csv");
        FAIL() << "expected TreatmentNotBinary";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TreatmentNotBinary);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("'d'"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, ErrorKinds)
{
    TempDir dir;
    write_file(dir / "missing.csv", "unit,time,y,x1\n1,1,0,1\n");
    EXPECT_EQ(kind_of([&] { load_csv(dir / "missing.csv"); }), ErrorKind::MissingColumn);

    write_file(dir / "empty.csv", "unit,time,y,d,x1\n");
    EXPECT_EQ(kind_of([&] { load_csv(dir / "empty.csv"); }), ErrorKind::EmptyFile);

    write_file(dir / "text.csv", "unit,time,y,d,x1\n1,1,0.5,0,1\n1,2,abc,0,1\n2,1,0.1,0,2\n2,2,0.2,1,2\n");
    try {
        load_csv(dir / "text.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonNumericCell);
        EXPECT_NE(std::string(e.what()).find("row 3, column 'y'"), std::string::npos) << e.what();
    }

    EXPECT_EQ(kind_of([&] { load_csv(dir / "nope.csv"); }), ErrorKind::Io);
}

TEST(LoadCsv, CustomColumnNamesAndCovariateOrder)
{
    TempDir dir;
    write_file(dir / "p.csv", "id,period,outcome,treated,b,a\n"
                              "u1,2001,1,0,10,20\nu1,2002,2,1,11,21\nu2,2001,3,0,12,22\nu2,2002,4,0,13,23\n");
    ColumnSchema schema;
    schema.unit = "id";
    schema.time = "period";
    schema.outcome = "outcome";
    schema.treatment = "treated";
    schema.covariates = {"a", "b"};
    const PanelDataset ds = load_csv(dir / "p.csv", schema);
    ASSERT_EQ(ds.n_covariates(), 2);
    EXPECT_DOUBLE_EQ(ds.X()(0, 0), 20.0);
    EXPECT_DOUBLE_EQ(ds.X()(0, 1), 10.0);
    EXPECT_EQ(ds.unit_label(0), "u1");
    EXPECT_EQ(ds.time_value(1), 2002.0);
}

TEST(LoadCsv, MpdtaSchemaBuildsTreatment)
{
    // Same layout as the county minimum-wage panel: 500 counties x 2003..2007.
    TempDir dir;
    std::string text = "\"year\",\"countyreal\",\"lpop\",\"lemp\",\"first.treat\",\"treat\"\n";
    const int first_treat[] = {0, 2004, 2006, 2007};
    for (int c = 1; c <= 500; ++c)
        for (int year = 2003; year <= 2007; ++year) {
            const int ft = first_treat[c % 4];
            text += std::to_string(year) + "," + std::to_string(c) + "," + std::to_string(3.0 + c * 0.001) + "," +
                    std::to_string(5.0 + 0.01 * year - 20) + "," + std::to_string(ft) + "," + (ft > 0 ? "1" : "0") +
                    "\n";
        }
    write_file(dir / "mpdta.csv", text);
    const PanelDataset ds = load_csv(dir / "mpdta.csv", ColumnSchema::mpdta());
    EXPECT_EQ(ds.n_obs(), 2500);
    EXPECT_EQ(ds.n_units(), 500);
    EXPECT_EQ(ds.n_periods(), 5);
    EXPECT_EQ(ds.n_covariates(), 1);
    for (Index r = 0; r < ds.n_obs(); ++r) {
        const int c = std::stoi(ds.unit_label(ds.unit_code(r)));
        const double year = *ds.time_value(ds.time_code(r));
        const int ft = first_treat[c % 4];
        EXPECT_EQ(ds.d()(r), (ft > 0 && year >= ft) ? 1.0 : 0.0);
    }
}

TEST(PanelDataset, RejectsInvalidPanels)
{
    Matrix X = Matrix::Ones(4, 1);
    Vector y = Vector::Zero(4);
    Vector d = Vector::Zero(4);
    EXPECT_EQ(kind_of([&] { PanelDataset(X, y, d, {1, 1, 1, 1}, {1, 2, 3, 4}); }), ErrorKind::InvalidPanel);
    EXPECT_EQ(kind_of([&] { PanelDataset(X, y, d, {1, 2, 1, 2}, {1, 1, 1, 1}); }), ErrorKind::InvalidPanel);
    EXPECT_EQ(kind_of([&] { PanelDataset(X.topRows(3), y.head(3), d.head(3), {1, 2, 1}, {1, 1, 2}); }),
              ErrorKind::InvalidPanel);
    Vector bad_d = d;
    bad_d(2) = 2.0;
    EXPECT_EQ(kind_of([&] { PanelDataset(X, y, bad_d, {1, 2, 1, 2}, {1, 1, 2, 2}); }), ErrorKind::TreatmentNotBinary);
    Vector nan_y = y;
    nan_y(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_EQ(kind_of([&] { PanelDataset(X, nan_y, d, {1, 2, 1, 2}, {1, 1, 2, 2}); }), ErrorKind::InvalidPanel);
    EXPECT_EQ(kind_of([&] { PanelDataset(X, y.head(3), d, {1, 2, 1, 2}, {1, 1, 2, 2}); }), ErrorKind::LengthMismatch);
}

TEST(PanelDataset, ValidationFlagsDoNotAlterData)
{
    Matrix X(5, 1);
    X << 1, 2, 3, 4, 5;
    Vector y(5);
    y << 10, 20, 30, 40, 50;
    Vector d(5);
    d << 0, 1, 0, 1, 0;
    const PanelDataset ds(X, y, d, {1, 1, 2, 2, 3}, {1, 2, 1, 2, 1});
    EXPECT_FALSE(ds.validation().balanced);
    EXPECT_EQ(ds.validation().singleton_units, 1);
    EXPECT_EQ(ds.validation().duplicate_cells, 0);
    EXPECT_EQ(ds.y(), y);
    EXPECT_EQ(ds.X(), X);
    EXPECT_EQ(ds.n_obs(), 5);

    const PanelDataset dup(X, y, d, {1, 1, 2, 2, 2}, {1, 2, 1, 2, 2});
    EXPECT_EQ(dup.validation().duplicate_cells, 1);
    EXPECT_FALSE(dup.validation().balanced);
}

TEST(WriteCsv, RoundTripIsExact)
{
    TempDir dir;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        const PanelDataset ds = testing::random_panel(rng, {.max_units = 12, .max_periods = 5, .keep_cell = 0.8, .p = 3});
        write_csv(ds, dir / "rt.csv");
        const PanelDataset back = load_csv(dir / "rt.csv");
        EXPECT_EQ(back.X(), ds.X());
        EXPECT_EQ(back.y(), ds.y());
        EXPECT_EQ(back.d(), ds.d());
        EXPECT_EQ(std::vector<int>(back.unit_codes().begin(), back.unit_codes().end()),
                  std::vector<int>(ds.unit_codes().begin(), ds.unit_codes().end()));
        EXPECT_EQ(std::vector<int>(back.time_codes().begin(), back.time_codes().end()),
                  std::vector<int>(ds.time_codes().begin(), ds.time_codes().end()));
    }
}

TEST(RowSet, RejectsUnsortedInput)
{
    EXPECT_EQ(kind_of([] { RowSet::from_sorted({3, 1}); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(kind_of([] { RowSet::from_sorted({1, 1}); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(RowSet::from_unsorted({3, 1, 3}).vector(), (std::vector<Index>{1, 3}));
}

TEST(SubsampleUnits, FullRatioCanCoverEverything)
{
    const PanelDataset ds = grid_panel(2, 3);
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Rng replay(seed);
        std::uniform_int_distribution<int> pick(0, 1);
        std::set<int> drawn{pick(replay), pick(replay)};
        const RowSet rows = subsample_units(ds, 1.0, rng);
        if (drawn.size() == 2) {
            EXPECT_EQ(rows, RowSet::all(ds.n_obs()));
            ++covered;
        }
    }
    EXPECT_GT(covered, 0);
}

TEST(SubsampleUnits, HalfOfTwoUnitsIsOneWholeUnit)
{
    const PanelDataset ds = grid_panel(2, 3);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const RowSet rows = subsample_units(ds, 0.5, rng);
        ASSERT_EQ(rows.size(), 3);
        EXPECT_EQ(units_in(ds, rows).size(), 1u);
    }
}

TEST(SubsampleUnits, MatchesReplayedDraws)
{
    const PanelDataset ds = grid_panel(200, 3);
    Rng rng(2024);
    Rng replay(2024);
    std::uniform_int_distribution<int> pick(0, 199);
    std::set<int> expected;
    for (int k = 0; k < 100; ++k)
        expected.insert(pick(replay));
    const RowSet rows = subsample_units(ds, 0.5, rng);
    const auto units = units_in(ds, rows);
    EXPECT_EQ(std::set<int>(units.begin(), units.end()), expected);
    EXPECT_EQ(rows.size(), static_cast<Index>(3 * expected.size()));
}

TEST(SubsampleUnits, KeepsWholeUnits)
{
    std::mt19937_64 gen(5);
    const PanelDataset ds = testing::random_panel(gen, {.max_units = 40, .max_periods = 8, .keep_cell = 0.7});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const RowSet rows = subsample_units(ds, 0.3, rng);
        for (int u : units_in(ds, rows))
            for (Index r : ds.unit_rows(u))
                EXPECT_TRUE(rows.contains(r));
    }
    Rng rng(0);
    EXPECT_THROW(subsample_units(ds, 0.0, rng), Error);
    EXPECT_THROW(subsample_units(ds, 1.5, rng), Error);
}

TEST(SplitUnits, TwoUnitsGoToOppositeSides)
{
    const PanelDataset ds = grid_panel(2, 4);
    Rng rng(3);
    const auto [a, b] = split_units(ds, RowSet::all(ds.n_obs()), 0.5, rng);
    EXPECT_EQ(a.size(), 4);
    EXPECT_EQ(b.size(), 4);
    EXPECT_EQ(units_in(ds, a).size(), 1u);
    EXPECT_EQ(units_in(ds, b).size(), 1u);
}

TEST(SplitUnits, PartitionProperty)
{
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 20; ++trial) {
        const PanelDataset ds = testing::random_panel(gen, {.max_units = 30, .max_periods = 6, .keep_cell = 0.8});
        Rng rng(static_cast<std::uint64_t>(trial));
        const RowSet rows = subsample_units(ds, 0.7, rng);
        if (units_in(ds, rows).size() < 2)
            continue;
        const auto [a, b] = split_units(ds, rows, 0.5, rng);
        EXPECT_EQ(set_union(a, b), rows);
        EXPECT_TRUE(set_intersection(a, b).empty());
        const auto ua = units_in(ds, a);
        const auto ub = units_in(ds, b);
        std::vector<int> shared;
        std::set_intersection(ua.begin(), ua.end(), ub.begin(), ub.end(), std::back_inserter(shared));
        EXPECT_TRUE(shared.empty());
        EXPECT_GE(ua.size(), 1u);
        EXPECT_GE(ub.size(), 1u);
    }
}

TEST(SplitUnits, MatchesReplayedShuffle)
{
    const PanelDataset ds = grid_panel(10, 6);
    Rng rng(77);
    Rng replay(77);
    std::vector<int> units(10);
    std::iota(units.begin(), units.end(), 0);
    std::shuffle(units.begin(), units.end(), replay);
    const std::set<int> expected_first(units.begin(), units.begin() + 5);

    const auto [a, b] = split_units(ds, RowSet::all(ds.n_obs()), 0.5, rng);
    EXPECT_EQ(a.size(), 30);
    EXPECT_EQ(b.size(), 30);
    const auto ua = units_in(ds, a);
    EXPECT_EQ(std::set<int>(ua.begin(), ua.end()), expected_first);
}

TEST(SplitUnits, TooFewUnits)
{
    const PanelDataset ds = grid_panel(3, 4);
    Rng rng(1);
    const RowSet one_unit = rows_of_units(ds, std::vector<int>{1});
    EXPECT_EQ(kind_of([&] { split_units(ds, one_unit, 0.5, rng); }), ErrorKind::TooFewUnits);
}

} // namespace
} // namespace cffe
