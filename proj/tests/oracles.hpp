#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's demeaning or split-search code paths.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cffe/panel.hpp"

namespace cffe::testing {

/// Residuals of a least-squares fit on unit and time indicator columns.
inline Vector dummy_ols_residuals(const Vector& v, const std::vector<int>& units, const std::vector<int>& times)
{
    std::vector<int> u_ids(units), t_ids(times);
    std::sort(u_ids.begin(), u_ids.end());
    u_ids.erase(std::unique(u_ids.begin(), u_ids.end()), u_ids.end());
    std::sort(t_ids.begin(), t_ids.end());
    t_ids.erase(std::unique(t_ids.begin(), t_ids.end()), t_ids.end());

    const Index n = v.size();
    const auto U = static_cast<Index>(u_ids.size());
    Matrix A = Matrix::Zero(n, U + static_cast<Index>(t_ids.size()));
    for (Index k = 0; k < n; ++k) {
        const auto u = std::lower_bound(u_ids.begin(), u_ids.end(), units[static_cast<std::size_t>(k)]) - u_ids.begin();
        const auto t = std::lower_bound(t_ids.begin(), t_ids.end(), times[static_cast<std::size_t>(k)]) - t_ids.begin();
        A(k, u) = 1.0;
        A(k, U + t) = 1.0;
    }
    const Vector beta = A.completeOrthogonalDecomposition().solve(v);
    return v - A * beta;
}

/// Slope of a no-intercept least-squares fit of y on d.
inline double no_intercept_slope(const Vector& y, const Vector& d)
{
    Matrix A(d.size(), 1);
    A.col(0) = d;
    return A.colPivHouseholderQr().solve(y)(0);
}

/// Maximum split gain over every (feature, midpoint) pair, computed by direct
/// summation over masks. Returns 0 when no admissible split exists.
inline double brute_force_max_gain(const Matrix& node_X, const Vector& y_tilde, const Vector& d_tilde, int min_leaf)
{
    const Index n = y_tilde.size();
    double best = 0.0;
    for (Index j = 0; j < node_X.cols(); ++j) {
        std::vector<double> values(node_X.col(j).data(), node_X.col(j).data() + n);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 1; k < values.size(); ++k) {
            const double c = 0.5 * (values[k - 1] + values[k]);
            double num_l = 0, den_l = 0, num_r = 0, den_r = 0;
            Index n_l = 0;
            for (Index i = 0; i < n; ++i) {
                if (node_X(i, j) <= c) {
                    num_l += d_tilde(i) * y_tilde(i);
                    den_l += d_tilde(i) * d_tilde(i);
                    ++n_l;
                } else {
                    num_r += d_tilde(i) * y_tilde(i);
                    den_r += d_tilde(i) * d_tilde(i);
                }
            }
            const Index n_r = n - n_l;
            if (n_l < min_leaf || n_r < min_leaf || den_l < 1e-12 || den_r < 1e-12)
                continue;
            const double diff = num_l / den_l - num_r / den_r;
            best = std::max(best, double(n_l) * double(n_r) / (double(n) * double(n)) * diff * diff);
        }
    }
    return best;
}

struct RandomPanelOptions {
    int max_units = 50;
    int max_periods = 10;
    double keep_cell = 1.0; ///< probability a (unit, time) cell is observed
    int singleton_units = 0;
    int p = 1;
};

/// Random panel with unit/time effects, binary treatment and noise.
inline PanelDataset random_panel(std::mt19937_64& rng, const RandomPanelOptions& opt)
{
    std::uniform_int_distribution<int> n_units(2, opt.max_units);
    std::uniform_int_distribution<int> n_periods(2, opt.max_periods);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution keep(opt.keep_cell), treat(0.4);

    for (;;) {
        const int U = n_units(rng);
        const int T = n_periods(rng);
        std::vector<std::int64_t> units, times;
        std::vector<double> y, d, x;
        std::vector<double> alpha(static_cast<std::size_t>(U)), gamma(static_cast<std::size_t>(T));
        for (auto& a : alpha)
            a = 3.0 * normal(rng);
        for (auto& g : gamma)
            g = 3.0 * normal(rng);
        auto add = [&](int u, int t) {
            units.push_back(u);
            times.push_back(t);
            const double dd = treat(rng) ? 1.0 : 0.0;
            d.push_back(dd);
            y.push_back(alpha[static_cast<std::size_t>(u)] + gamma[static_cast<std::size_t>(t)] + 1.5 * dd + normal(rng));
            for (int j = 0; j < opt.p; ++j)
                x.push_back(normal(rng));
        };
        for (int u = 0; u < U; ++u)
            for (int t = 0; t < T; ++t)
                if (keep(rng))
                    add(u, t);
        for (int s = 0; s < opt.singleton_units; ++s) {
            alpha.push_back(3.0 * normal(rng));
            add(U + s, static_cast<int>(rng() % static_cast<unsigned>(T)));
        }
        const auto n = static_cast<Index>(y.size());
        std::vector<std::int64_t> distinct_u(units), distinct_t(times);
        std::sort(distinct_u.begin(), distinct_u.end());
        std::sort(distinct_t.begin(), distinct_t.end());
        if (n < 4 || std::unique(distinct_u.begin(), distinct_u.end()) - distinct_u.begin() < 2 ||
            std::unique(distinct_t.begin(), distinct_t.end()) - distinct_t.begin() < 2)
            continue;
        Matrix X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data(), n, opt.p);
        return PanelDataset(std::move(X), Eigen::Map<Vector>(y.data(), n), Eigen::Map<Vector>(d.data(), n), units,
                            times);
    }
}

inline std::vector<int> codes_at(std::span<const int> codes, const RowSet& rows)
{
    std::vector<int> out;
    for (Index r : rows)
        out.push_back(codes[static_cast<std::size_t>(r)]);
    return out;
}

} // namespace cffe::testing
