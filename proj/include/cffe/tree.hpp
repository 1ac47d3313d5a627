#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cffe/demean.hpp"
#include "cffe/error.hpp"
#include "cffe/panel.hpp"
#include "cffe/types.hpp"

namespace cffe {

/// Where node residuals come from while growing a tree.
enum class Residualization {
    NodeLevel, ///< re-estimate unit and time effects inside every node
    Global,    ///< demean once on the full sample; nodes reuse those residuals
};

/// How candidate children are scored during the split search.
enum class SplitSearch {
    ParentResiduals, ///< children use the parent's residuals restricted to each side
    RefitChildren,   ///< every candidate child is re-residualized before scoring
};

struct HyperParams {
    int n_trees = 100;
    int max_depth = 5;
    int min_leaf = 20;
    bool honest = true;
    double subsample_ratio = 0.5;
    int n_thresholds = 32;
    std::optional<std::uint64_t> seed;

    Residualization residualization = Residualization::NodeLevel;
    SplitSearch split_search = SplitSearch::ParentResiduals;
    DemeanConfig demean;
    /// Worker threads for fitting; 0 picks hardware concurrency. Never
    /// affects results.
    int n_threads = 0;

    void validate() const;
};

/// Below this, a node has no usable within-variation in treatment.
inline constexpr double kMinTreatmentVariation = 1e-12;

/// IV-style local effect sum(d~ * y~) / sum(d~^2). Throws NoTreatmentVariation
/// when the denominator vanishes.
template <typename DerivedY, typename DerivedD>
typename DerivedY::Scalar local_tau(const Eigen::MatrixBase<DerivedY>& y_tilde,
                                    const Eigen::MatrixBase<DerivedD>& d_tilde)
{
    using Scalar = typename DerivedY::Scalar;
    if (y_tilde.size() != d_tilde.size() || y_tilde.size() == 0)
        throw Error(ErrorKind::LengthMismatch, "local_tau needs aligned nonempty residual vectors");
    const Scalar den = d_tilde.squaredNorm();
    if (!(den >= static_cast<Scalar>(kMinTreatmentVariation)))
        throw Error(ErrorKind::NoTreatmentVariation, "node has no within-variation in treatment");
    return d_tilde.dot(y_tilde) / den;
}

struct SplitGain {
    double delta = 0.0;
    double tau_left = 0.0;
    double tau_right = 0.0;
};

/// Heterogeneity gain (n_L n_R / n^2)(tau_L - tau_R)^2 of splitting `parent`
/// by `left_mask`, using the parent's residuals on each side. Throws
/// DegenerateChild if a side is empty or lacks treatment variation.
SplitGain split_gain(const ResidualizedNode& parent, const Mask& left_mask);

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double delta = 0.0;
    Index n_left = 0;
    Index n_right = 0;
    double tau_left = 0.0;
    double tau_right = 0.0;
};

/// Split points for one feature given its sorted node values: every midpoint
/// between adjacent distinct values when there are at most `max_count`,
/// otherwise midpoints placed at `max_count` empirical quantiles.
std::vector<double> candidate_thresholds(std::span<const double> sorted_values, int max_count);

/// Supplies ResidualizedNode for arbitrary row sets according to a
/// Residualization mode. Cheap to copy; global residuals are shared.
class NodeResidualizer {
  public:
    NodeResidualizer(const PanelDataset& ds, Residualization mode, const DemeanConfig& config);

    ResidualizedNode operator()(const RowSet& rows) const;
    Residualization mode() const noexcept { return mode_; }

  private:
    const PanelDataset* ds_;
    Residualization mode_;
    DemeanConfig config_;
    std::shared_ptr<const ResidualizedNode> global_;
};

/// Best (feature, threshold) for `node` under hp.min_leaf, or nothing when no
/// candidate has positive gain. Ties go to the lowest feature, then the lowest
/// threshold. `refit` is required for SplitSearch::RefitChildren.
std::optional<SplitCandidate> best_split(const PanelDataset& ds, const ResidualizedNode& node, const HyperParams& hp,
                                         const NodeResidualizer* refit = nullptr);

struct TreeNode {
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    /// Estimation-sample effect; for internal nodes the value children fall
    /// back to.
    double tau_hat = 0.0;
    Index n_est = 0;

    bool is_leaf() const noexcept { return feature < 0; }
};

/// Flat honest tree; nodes[0] is the root. Rows x with x[feature] <= threshold
/// go left.
struct Tree {
    std::vector<TreeNode> nodes;
    Index n_features = 0;
    RowSet structure_rows;
    RowSet estimation_rows;
    std::vector<int> subsampled_units;

    int leaf_index(CRef<Vector> x) const;
    int depth() const;
    Index n_leaves() const;
    /// Same features, thresholds and shape; leaf values are ignored.
    bool same_topology(const Tree& other) const;
};

/// Grows one tree on `rows`: honest unit split, recursive node-level
/// residualized splitting on the structure half, then leaf effects from the
/// estimation half with nearest-ancestor fallback.
Tree build_tree(const PanelDataset& ds, const RowSet& rows, const HyperParams& hp, Rng& rng,
                const NodeResidualizer& residualizer);
Tree build_tree(const PanelDataset& ds, const RowSet& rows, const HyperParams& hp, Rng& rng);

double predict_tree(const Tree& tree, CRef<Vector> x);

} // namespace cffe
