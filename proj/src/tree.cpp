#include "cffe/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cffe {

void HyperParams::validate() const
{
    if (n_trees < 1)
        throw Error(ErrorKind::InvalidArgument, "n_trees must be positive");
    if (max_depth < 1)
        throw Error(ErrorKind::InvalidArgument, "max_depth must be positive");
    if (min_leaf < 2)
        throw Error(ErrorKind::InvalidArgument, "min_leaf must be at least 2");
    if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "subsample_ratio must lie in (0, 1]");
    if (n_thresholds < 1)
        throw Error(ErrorKind::InvalidArgument, "n_thresholds must be positive");
    if (n_threads < 0)
        throw Error(ErrorKind::InvalidArgument, "n_threads must be non-negative");
    demean.validate();
}

SplitGain split_gain(const ResidualizedNode& parent, const Mask& left_mask)
{
    const Index n = parent.size();
    if (left_mask.size() != n)
        throw Error(ErrorKind::LengthMismatch, "split mask is not aligned with the node");
    double num_l = 0, den_l = 0, num_r = 0, den_r = 0;
    Index n_l = 0;
    for (Index k = 0; k < n; ++k) {
        const double dy = parent.d_tilde(k) * parent.y_tilde(k);
        const double dd = parent.d_tilde(k) * parent.d_tilde(k);
        if (left_mask(k)) {
            num_l += dy;
            den_l += dd;
            ++n_l;
        } else {
            num_r += dy;
            den_r += dd;
        }
    }
    const Index n_r = n - n_l;
    if (n_l == 0 || n_r == 0)
        throw Error(ErrorKind::DegenerateChild, "split leaves one side empty");
    if (den_l < kMinTreatmentVariation || den_r < kMinTreatmentVariation)
        throw Error(ErrorKind::DegenerateChild, "a child has no treatment variation");

    SplitGain gain;
    gain.tau_left = num_l / den_l;
    gain.tau_right = num_r / den_r;
    const double diff = gain.tau_left - gain.tau_right;
    gain.delta = static_cast<double>(n_l) * static_cast<double>(n_r) / (static_cast<double>(n) * n) * diff * diff;
    return gain;
}

std::vector<double> candidate_thresholds(std::span<const double> sorted_values, int max_count)
{
    std::vector<double> out;
    const auto n = sorted_values.size();
    if (n < 2 || max_count < 1)
        return out;

    std::size_t distinct = 1;
    for (std::size_t k = 1; k < n; ++k)
        if (sorted_values[k] != sorted_values[k - 1])
            ++distinct;

    if (distinct - 1 <= static_cast<std::size_t>(max_count)) {
        for (std::size_t k = 1; k < n; ++k)
            if (sorted_values[k] != sorted_values[k - 1])
                out.push_back(0.5 * (sorted_values[k - 1] + sorted_values[k]));
        return out;
    }

    for (int q = 1; q <= max_count; ++q) {
        auto pos = static_cast<std::size_t>(static_cast<double>(q) * static_cast<double>(n) / (max_count + 1));
        pos = std::min(pos, n - 1);
        const double value = sorted_values[pos];
        auto next = std::upper_bound(sorted_values.begin(), sorted_values.end(), value);
        if (next == sorted_values.end())
            continue;
        out.push_back(0.5 * (value + *next));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// --- NodeResidualizer ---------------------------------------------------------

NodeResidualizer::NodeResidualizer(const PanelDataset& ds, Residualization mode, const DemeanConfig& config)
    : ds_(&ds), mode_(mode), config_(config)
{
    if (mode_ == Residualization::Global)
        global_ = std::make_shared<const ResidualizedNode>(residualize_global(ds, config));
}

ResidualizedNode NodeResidualizer::operator()(const RowSet& rows) const
{
    if (mode_ == Residualization::NodeLevel)
        return residualize_node(*ds_, rows, config_);

    ResidualizedNode node;
    node.rows = rows;
    node.y_tilde.resize(rows.size());
    node.d_tilde.resize(rows.size());
    for (Index k = 0; k < rows.size(); ++k) {
        node.y_tilde(k) = global_->y_tilde(rows[k]);
        node.d_tilde(k) = global_->d_tilde(rows[k]);
    }
    node.iterations_used = global_->iterations_used;
    node.converged = global_->converged;
    return node;
}

// --- Split search ---------------------------------------------------------------

namespace {

// Gains closer than this (relative) count as ties. Different features can
// induce the same partition, and their gains then differ only by summation
// order; without a tolerance the winner would depend on rounding.
constexpr double kRelativeTieTolerance = 1e-10;

struct Best {
    std::optional<SplitCandidate> split;

    void offer(const SplitCandidate& c)
    {
        const double best = split ? split->delta : 0.0;
        if (c.delta > best * (1.0 + kRelativeTieTolerance))
            split = c;
    }
};

/// Node-local row positions sorted by feature value.
std::vector<Index> order_by(const PanelDataset& ds, const RowSet& rows, int feature)
{
    std::vector<Index> order(static_cast<std::size_t>(rows.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return ds.X()(rows[a], feature) < ds.X()(rows[b], feature); });
    return order;
}

void search_parent_residuals(const PanelDataset& ds, const ResidualizedNode& node, const HyperParams& hp, int j,
                             Best& best)
{
    const Index n = node.size();
    const auto order = order_by(ds, node.rows, j);
    std::vector<double> xs(order.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        xs[k] = ds.X()(node.rows[order[k]], j);

    // prefix[k] sums the first k sorted rows; suffix[k] sums rows k..n-1
    const auto size = static_cast<std::size_t>(n);
    std::vector<double> pre_dy(size + 1, 0.0), pre_dd(size + 1, 0.0), suf_dy(size + 1, 0.0), suf_dd(size + 1, 0.0);
    for (std::size_t k = 0; k < size; ++k) {
        const double d = node.d_tilde(order[k]);
        pre_dy[k + 1] = pre_dy[k] + d * node.y_tilde(order[k]);
        pre_dd[k + 1] = pre_dd[k] + d * d;
    }
    for (std::size_t k = size; k-- > 0;) {
        const double d = node.d_tilde(order[k]);
        suf_dy[k] = suf_dy[k + 1] + d * node.y_tilde(order[k]);
        suf_dd[k] = suf_dd[k + 1] + d * d;
    }

    for (double c : candidate_thresholds(xs, hp.n_thresholds)) {
        const auto n_l = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), c) - xs.begin());
        const auto n_r = size - n_l;
        if (n_l < static_cast<std::size_t>(hp.min_leaf) || n_r < static_cast<std::size_t>(hp.min_leaf))
            continue;
        if (pre_dd[n_l] < kMinTreatmentVariation || suf_dd[n_l] < kMinTreatmentVariation)
            continue;
        SplitCandidate cand;
        cand.feature = j;
        cand.threshold = c;
        cand.n_left = static_cast<Index>(n_l);
        cand.n_right = static_cast<Index>(n_r);
        cand.tau_left = pre_dy[n_l] / pre_dd[n_l];
        cand.tau_right = suf_dy[n_l] / suf_dd[n_l];
        const double diff = cand.tau_left - cand.tau_right;
        cand.delta = static_cast<double>(n_l) * static_cast<double>(n_r) / (static_cast<double>(n) * n) * diff * diff;
        best.offer(cand);
    }
}

void search_refit_children(const PanelDataset& ds, const ResidualizedNode& node, const HyperParams& hp, int j,
                           const NodeResidualizer& refit, Best& best)
{
    const Index n = node.size();
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k)
        xs[static_cast<std::size_t>(k)] = ds.X()(node.rows[k], j);
    std::sort(xs.begin(), xs.end());

    for (double c : candidate_thresholds(xs, hp.n_thresholds)) {
        std::vector<Index> left, right;
        for (Index r : node.rows)
            (ds.X()(r, j) <= c ? left : right).push_back(r);
        if (static_cast<Index>(left.size()) < hp.min_leaf || static_cast<Index>(right.size()) < hp.min_leaf)
            continue;
        const auto l = refit(RowSet::from_sorted(std::move(left)));
        const auto r = refit(RowSet::from_sorted(std::move(right)));
        if (l.d_tilde.squaredNorm() < kMinTreatmentVariation || r.d_tilde.squaredNorm() < kMinTreatmentVariation)
            continue;
        SplitCandidate cand;
        cand.feature = j;
        cand.threshold = c;
        cand.n_left = l.size();
        cand.n_right = r.size();
        cand.tau_left = local_tau(l.y_tilde, l.d_tilde);
        cand.tau_right = local_tau(r.y_tilde, r.d_tilde);
        const double diff = cand.tau_left - cand.tau_right;
        cand.delta = static_cast<double>(cand.n_left) * static_cast<double>(cand.n_right) /
                     (static_cast<double>(n) * n) * diff * diff;
        best.offer(cand);
    }
}

} // namespace

std::optional<SplitCandidate> best_split(const PanelDataset& ds, const ResidualizedNode& node, const HyperParams& hp,
                                         const NodeResidualizer* refit)
{
    if (node.size() < 2 * static_cast<Index>(hp.min_leaf))
        return std::nullopt;
    if (hp.split_search == SplitSearch::RefitChildren && refit == nullptr)
        throw Error(ErrorKind::InvalidArgument, "refit split search needs a residualizer");

    Best best;
    for (int j = 0; j < static_cast<int>(ds.n_covariates()); ++j) {
        if (hp.split_search == SplitSearch::ParentResiduals)
            search_parent_residuals(ds, node, hp, j, best);
        else
            search_refit_children(ds, node, hp, j, *refit, best);
    }
    return best.split;
}

// --- Tree -------------------------------------------------------------------------

int Tree::leaf_index(CRef<Vector> x) const
{
    if (x.size() != n_features)
        throw Error(ErrorKind::DimensionMismatch, "tree expects " + std::to_string(n_features) +
                                                      " covariates, got " + std::to_string(x.size()));
    int k = 0;
    while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
        const auto& node = nodes[static_cast<std::size_t>(k)];
        k = x(node.feature) <= node.threshold ? node.left : node.right;
    }
    return k;
}

int Tree::depth() const
{
    std::vector<int> depth(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        deepest = std::max(deepest, depth[k]);
        if (!nodes[k].is_leaf()) {
            depth[static_cast<std::size_t>(nodes[k].left)] = depth[k] + 1;
            depth[static_cast<std::size_t>(nodes[k].right)] = depth[k] + 1;
        }
    }
    return deepest;
}

Index Tree::n_leaves() const
{
    return std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); });
}

bool Tree::same_topology(const Tree& other) const
{
    if (nodes.size() != other.nodes.size())
        return false;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& a = nodes[k];
        const auto& b = other.nodes[k];
        if (a.feature != b.feature || a.left != b.left || a.right != b.right)
            return false;
        if (!a.is_leaf() && a.threshold != b.threshold)
            return false;
    }
    return true;
}

double predict_tree(const Tree& tree, CRef<Vector> x)
{
    return tree.nodes[static_cast<std::size_t>(tree.leaf_index(x))].tau_hat;
}

namespace {

class TreeBuilder {
  public:
    TreeBuilder(const PanelDataset& ds, const HyperParams& hp, const NodeResidualizer& residualizer, Tree& tree)
        : ds_(ds), hp_(hp), residualizer_(residualizer), tree_(tree)
    {
    }

    int grow(const RowSet& rows, int depth)
    {
        const int idx = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        if (depth >= hp_.max_depth || rows.size() < 2 * static_cast<Index>(hp_.min_leaf))
            return idx;

        // each node is residualized afresh on its own rows
        const ResidualizedNode node = residualizer_(rows);
        if (node.d_tilde.squaredNorm() < kMinTreatmentVariation)
            return idx;
        const auto split = best_split(ds_, node, hp_, &residualizer_);
        if (!split)
            return idx;

        auto [left, right] = partition(rows, split->feature, split->threshold);
        tree_.nodes[static_cast<std::size_t>(idx)].feature = split->feature;
        tree_.nodes[static_cast<std::size_t>(idx)].threshold = split->threshold;
        const int l = grow(left, depth + 1);
        tree_.nodes[static_cast<std::size_t>(idx)].left = l;
        const int r = grow(right, depth + 1);
        tree_.nodes[static_cast<std::size_t>(idx)].right = r;
        return idx;
    }

    void populate(int idx, const RowSet& rows, std::optional<double> inherited)
    {
        std::optional<double> estimate;
        if (rows.size() >= 2) {
            const ResidualizedNode node = residualizer_(rows);
            if (node.d_tilde.squaredNorm() >= kMinTreatmentVariation)
                estimate = local_tau(node.y_tilde, node.d_tilde);
        }
        if (!estimate) {
            if (!inherited)
                throw Error(ErrorKind::UntrainableTree, "estimation sample has no treatment variation");
            estimate = inherited;
        }

        auto& node = tree_.nodes[static_cast<std::size_t>(idx)];
        node.tau_hat = *estimate;
        node.n_est = rows.size();
        if (node.is_leaf())
            return;
        const int left = node.left;
        const int right = node.right;
        auto [lrows, rrows] = partition(rows, node.feature, node.threshold);
        populate(left, lrows, estimate);
        populate(right, rrows, estimate);
    }

  private:
    std::pair<RowSet, RowSet> partition(const RowSet& rows, int feature, double threshold) const
    {
        std::vector<Index> left, right;
        for (Index r : rows)
            (ds_.X()(r, feature) <= threshold ? left : right).push_back(r);
        return {RowSet::from_sorted(std::move(left)), RowSet::from_sorted(std::move(right))};
    }

    const PanelDataset& ds_;
    const HyperParams& hp_;
    const NodeResidualizer& residualizer_;
    Tree& tree_;
};

} // namespace

Tree build_tree(const PanelDataset& ds, const RowSet& rows, const HyperParams& hp, Rng& rng,
                const NodeResidualizer& residualizer)
{
    hp.validate();
    if (rows.empty())
        throw Error(ErrorKind::InvalidArgument, "cannot grow a tree on an empty row set");

    Tree tree;
    tree.n_features = ds.n_covariates();
    tree.subsampled_units = units_in(ds, rows);
    if (hp.honest) {
        auto [structure, estimation] = split_units(ds, rows, 0.5, rng);
        tree.structure_rows = std::move(structure);
        tree.estimation_rows = std::move(estimation);
    } else {
        tree.structure_rows = rows;
        tree.estimation_rows = rows;
    }

    TreeBuilder builder(ds, hp, residualizer, tree);
    builder.grow(tree.structure_rows, 0);
    builder.populate(0, tree.estimation_rows, std::nullopt);
    return tree;
}

Tree build_tree(const PanelDataset& ds, const RowSet& rows, const HyperParams& hp, Rng& rng)
{
    const NodeResidualizer residualizer(ds, hp.residualization, hp.demean);
    return build_tree(ds, rows, hp, rng, residualizer);
}

} // namespace cffe
