#include "cffe/forest.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>
#include <mutex>
#include <optional>
#include <thread>

#include <boost/math/distributions/normal.hpp>

namespace cffe {

namespace {

struct TreeOutcome {
    std::optional<Tree> tree;
    bool retried = false;
};

TreeOutcome grow_one(const PanelDataset& ds, const HyperParams& hp, const NodeResidualizer& residualizer,
                     std::uint64_t seed, int b)
{
    TreeOutcome out;
    for (int attempt = 0; attempt < 2; ++attempt) {
        Rng rng = derive_rng(seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt));
        try {
            const RowSet rows = subsample_units(ds, hp.subsample_ratio, rng);
            out.tree = build_tree(ds, rows, hp, rng, residualizer);
            out.retried = attempt > 0;
            return out;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UntrainableTree && e.kind() != ErrorKind::TooFewUnits)
                throw;
        }
    }
    out.retried = true;
    return out;
}

int worker_count(int requested, int jobs)
{
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    return std::clamp(n, 1, std::max(jobs, 1));
}

} // namespace

CFFEForestModel fit(const PanelDataset& ds, const HyperParams& hp)
{
    hp.validate();
    CFFEForestModel model;
    model.hp = hp;
    model.n_features = ds.n_covariates();
    model.seed = hp.seed ? *hp.seed : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();

    const NodeResidualizer residualizer(ds, hp.residualization, hp.demean);
    std::vector<TreeOutcome> outcomes(static_cast<std::size_t>(hp.n_trees));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto work = [&] {
        for (int b = next++; b < hp.n_trees; b = next++) {
            try {
                outcomes[static_cast<std::size_t>(b)] = grow_one(ds, hp, residualizer, model.seed, b);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    const int workers = worker_count(hp.n_threads, hp.n_trees);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }
    if (failure)
        std::rethrow_exception(failure);

    for (auto& outcome : outcomes) {
        if (outcome.retried)
            ++model.retried_trees;
        if (outcome.tree)
            model.trees.push_back(std::move(*outcome.tree));
        else
            ++model.skipped_trees;
    }
    if (model.trees.empty())
        throw Error(ErrorKind::AllTreesUntrainable,
                    "none of " + std::to_string(hp.n_trees) + " trees could be trained; is the treatment constant?");
    return model;
}

Matrix predict_per_tree(const CFFEForestModel& model, CRef<Matrix> X)
{
    if (X.cols() != model.n_features)
        throw Error(ErrorKind::DimensionMismatch, "model was trained on " + std::to_string(model.n_features) +
                                                      " covariates, data has " + std::to_string(X.cols()));
    Matrix out(X.rows(), static_cast<Index>(model.trees.size()));
    for (Index i = 0; i < X.rows(); ++i) {
        const Vector x = X.row(i).transpose();
        for (std::size_t b = 0; b < model.trees.size(); ++b)
            out(i, static_cast<Index>(b)) = predict_tree(model.trees[b], x);
    }
    return out;
}

Vector predict(const CFFEForestModel& model, CRef<Matrix> X) { return predict_per_tree(model, X).rowwise().mean(); }

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0))
        throw Error(ErrorKind::InvalidArgument, "normal quantile needs p in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

IntervalPrediction predict_interval(const CFFEForestModel& model, CRef<Matrix> X, double alpha, Rng& rng,
                                    int n_partitions)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0, 1), got " + std::to_string(alpha));
    const auto n_trees = static_cast<Index>(model.trees.size());
    if (n_trees < 2)
        throw Error(ErrorKind::TooFewTrees, "half-sample intervals need at least 2 trees");
    if (n_partitions < 1)
        throw Error(ErrorKind::InvalidArgument, "n_partitions must be positive");

    const Matrix per_tree = predict_per_tree(model, X);
    IntervalPrediction out;
    out.alpha = alpha;
    out.tau_hat = per_tree.rowwise().mean();

    std::vector<Index> order(static_cast<std::size_t>(n_trees));
    std::iota(order.begin(), order.end(), Index{0});
    const Index half = n_trees / 2;
    Vector variance = Vector::Zero(X.rows());
    for (int k = 0; k < n_partitions; ++k) {
        std::shuffle(order.begin(), order.end(), rng);
        const std::vector<Index> a(order.begin(), order.begin() + half);
        const std::vector<Index> b(order.begin() + half, order.end());
        const Vector diff = (per_tree(Eigen::all, a).rowwise().mean() - per_tree(Eigen::all, b).rowwise().mean()) / 2.0;
        variance += diff.cwiseAbs2();
    }
    variance /= static_cast<double>(n_partitions);

    const double z = normal_quantile(1.0 - alpha / 2.0);
    const Vector margin = z * variance.cwiseSqrt();
    out.ci_lower = out.tau_hat - margin;
    out.ci_upper = out.tau_hat + margin;
    return out;
}

double twfe_att(const PanelDataset& ds, const DemeanConfig& config)
{
    const ResidualizedNode global = residualize_global(ds, config);
    return local_tau(global.y_tilde, global.d_tilde);
}

} // namespace cffe
