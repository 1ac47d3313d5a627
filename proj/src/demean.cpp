#include "cffe/demean.hpp"

namespace cffe {

ResidualizedNode residualize_node(const PanelDataset& ds, const RowSet& rows, const DemeanConfig& config)
{
    if (rows.empty())
        throw Error(ErrorKind::InvalidArgument, "cannot residualize an empty node");
    const Index m = rows.size();
    Vector y(m), d(m);
    std::vector<int> units(static_cast<std::size_t>(m)), times(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
        const Index r = rows[k];
        y(k) = ds.y()(r);
        d(k) = ds.d()(r);
        units[static_cast<std::size_t>(k)] = ds.unit_code(r);
        times[static_cast<std::size_t>(k)] = ds.time_code(r);
    }

    auto ry = twoway_demean(y, units, times, config);
    auto rd = twoway_demean(d, units, times, config);

    ResidualizedNode node;
    node.rows = rows;
    node.y_tilde = std::move(ry.residuals);
    node.d_tilde = std::move(rd.residuals);
    node.alpha_hat = std::move(ry.unit_effects);
    node.gamma_hat = std::move(ry.time_effects);
    node.delta_hat = std::move(rd.unit_effects);
    node.eta_hat = std::move(rd.time_effects);
    node.iterations_used = std::max(ry.iterations, rd.iterations);
    node.converged = ry.converged && rd.converged;
    return node;
}

ResidualizedNode residualize_global(const PanelDataset& ds, const DemeanConfig& config)
{
    return residualize_node(ds, RowSet::all(ds.n_obs()), config);
}

} // namespace cffe
