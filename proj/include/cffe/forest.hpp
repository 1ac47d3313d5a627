#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cffe/panel.hpp"
#include "cffe/tree.hpp"
#include "cffe/types.hpp"

namespace cffe {

struct CFFEForestModel {
    std::vector<Tree> trees;
    HyperParams hp;
    Index n_features = 0;
    /// Seed actually used (drawn from std::random_device when hp.seed is unset).
    std::uint64_t seed = 0;
    /// Trees that needed a second subsample, and trees dropped after two failures.
    int retried_trees = 0;
    int skipped_trees = 0;
};

/// Grows hp.n_trees trees, tree b on a unit subsample drawn from a stream
/// derived from (seed, b). Output does not depend on the worker count.
CFFEForestModel fit(const PanelDataset& ds, const HyperParams& hp);

/// m x n_trees matrix of per-tree predictions.
Matrix predict_per_tree(const CFFEForestModel& model, CRef<Matrix> X);

/// Mean over trees.
Vector predict(const CFFEForestModel& model, CRef<Matrix> X);

struct IntervalPrediction {
    Vector tau_hat;
    Vector ci_lower;
    Vector ci_upper;
    double alpha = 0.05;
};

/// Half-sample variance: over `n_partitions` random halvings of the trees,
/// v(x) = mean(((mean_A - mean_B) / 2)^2); interval tau_hat +- z_{1-alpha/2} sqrt(v).
IntervalPrediction predict_interval(const CFFEForestModel& model, CRef<Matrix> X, double alpha, Rng& rng,
                                    int n_partitions = 50);

double normal_quantile(double p);

/// Pooled two-way fixed-effects effect: globally demeaned sum(d~ y~) / sum(d~^2).
double twfe_att(const PanelDataset& ds, const DemeanConfig& config = {});

inline constexpr int kModelFormatVersion = 1;

void save_model(const CFFEForestModel& model, const std::filesystem::path& path);
CFFEForestModel load_model(const std::filesystem::path& path);

} // namespace cffe
