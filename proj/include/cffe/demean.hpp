#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <vector>

#include "cffe/error.hpp"
#include "cffe/panel.hpp"
#include "cffe/types.hpp"

namespace cffe {

/// Stopping rule for alternating projections: stop once a full unit+time sweep
/// moves no residual by more than `tol`, or after `max_iter` sweeps.
struct DemeanConfig {
    double tol = 1e-8;
    int max_iter = 100;

    void validate() const
    {
        if (!(tol > 0.0))
            throw Error(ErrorKind::InvalidArgument, "demeaning tolerance must be positive");
        if (max_iter < 1)
            throw Error(ErrorKind::InvalidArgument, "demeaning needs at least one sweep");
    }
};

template <typename Scalar>
struct DemeanResult {
    VectorX<Scalar> residuals;
    /// Accumulated group means per projection pass, keyed by the caller's ids.
    /// No normalization is imposed; only the residuals are identified.
    std::map<int, Scalar> unit_effects;
    std::map<int, Scalar> time_effects;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Maps arbitrary integer ids onto 0..G-1.
struct Groups {
    std::vector<int> local;
    std::vector<int> ids;
    std::vector<Index> counts;
};

inline Groups compress(std::span<const int> ids)
{
    Groups g;
    g.ids.assign(ids.begin(), ids.end());
    std::sort(g.ids.begin(), g.ids.end());
    g.ids.erase(std::unique(g.ids.begin(), g.ids.end()), g.ids.end());
    g.counts.assign(g.ids.size(), 0);
    g.local.reserve(ids.size());
    for (int id : ids) {
        const auto k = static_cast<int>(std::lower_bound(g.ids.begin(), g.ids.end(), id) - g.ids.begin());
        g.local.push_back(k);
        ++g.counts[static_cast<std::size_t>(k)];
    }
    return g;
}

/// Subtracts group means in place and returns them.
template <typename Scalar>
std::vector<Scalar> sweep(VectorX<Scalar>& r, const Groups& g)
{
    std::vector<Scalar> means(g.ids.size(), Scalar(0));
    for (Index k = 0; k < r.size(); ++k)
        means[static_cast<std::size_t>(g.local[static_cast<std::size_t>(k)])] += r(k);
    for (std::size_t j = 0; j < means.size(); ++j)
        means[j] /= static_cast<Scalar>(g.counts[j]);
    for (Index k = 0; k < r.size(); ++k)
        r(k) -= means[static_cast<std::size_t>(g.local[static_cast<std::size_t>(k)])];
    return means;
}

} // namespace detail

/// Two-way within transform by alternating projections: demean by unit, then
/// by time, repeated until the sweep-to-sweep change is at most `config.tol`.
/// Failure to converge is reported through `converged`, never thrown.
template <typename Derived>
DemeanResult<typename Derived::Scalar> twoway_demean(const Eigen::MatrixBase<Derived>& values,
                                                     std::span<const int> unit_ids, std::span<const int> time_ids,
                                                     const DemeanConfig& config = {})
{
    using Scalar = typename Derived::Scalar;
    static_assert(Derived::ColsAtCompileTime == 1, "twoway_demean expects a column vector");
    config.validate();
    const Index n = values.size();
    if (n == 0 || static_cast<Index>(unit_ids.size()) != n || static_cast<Index>(time_ids.size()) != n)
        throw Error(ErrorKind::LengthMismatch, "values and group ids must be aligned and nonempty");

    const detail::Groups units = detail::compress(unit_ids);
    const detail::Groups times = detail::compress(time_ids);

    DemeanResult<Scalar> out;
    out.residuals = values;
    std::vector<Scalar> alpha(units.ids.size(), Scalar(0));
    std::vector<Scalar> gamma(times.ids.size(), Scalar(0));
    VectorX<Scalar> previous(n);
    const auto tol = static_cast<Scalar>(config.tol);

    for (int it = 1; it <= config.max_iter; ++it) {
        previous = out.residuals;
        const auto unit_means = detail::sweep(out.residuals, units);
        const auto time_means = detail::sweep(out.residuals, times);
        for (std::size_t j = 0; j < alpha.size(); ++j)
            alpha[j] += unit_means[j];
        for (std::size_t j = 0; j < gamma.size(); ++j)
            gamma[j] += time_means[j];
        out.iterations = it;
        if ((out.residuals - previous).cwiseAbs().maxCoeff() <= tol) {
            out.converged = true;
            break;
        }
    }
    for (std::size_t j = 0; j < alpha.size(); ++j)
        out.unit_effects.emplace(units.ids[j], alpha[j]);
    for (std::size_t j = 0; j < gamma.size(); ++j)
        out.time_effects.emplace(times.ids[j], gamma[j]);
    return out;
}

/// A node's rows with outcome and treatment residualized on node-local unit
/// and time effects. Effect maps are keyed by the dataset's dense codes.
struct ResidualizedNode {
    RowSet rows;
    Vector y_tilde;
    Vector d_tilde;
    std::map<int, double> alpha_hat;
    std::map<int, double> gamma_hat;
    std::map<int, double> delta_hat;
    std::map<int, double> eta_hat;
    int iterations_used = 0;
    bool converged = true;

    Index size() const noexcept { return rows.size(); }
};

ResidualizedNode residualize_node(const PanelDataset& ds, const RowSet& rows, const DemeanConfig& config = {});

/// Global two-way residuals of y and d over the full sample.
ResidualizedNode residualize_global(const PanelDataset& ds, const DemeanConfig& config = {});

} // namespace cffe
