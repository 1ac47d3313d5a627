#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cffe/forest.hpp"
#include "cffe/panel.hpp"
#include "cffe/types.hpp"

namespace cffe::sim {

enum class EffectKind { Placebo, Homogeneous, Heterogeneous };

std::string to_string(EffectKind kind);
EffectKind effect_from_string(const std::string& name);

/// Staggered-adoption panel Y = alpha_i + gamma_t + tau(x) D + eps with
/// unit-level covariates x ~ N(0, 1). Confounded draws set
/// alpha_i = 2 x_1i + nu_i.
struct DGPConfig {
    Index n_units = 200;
    Index n_periods = 6;
    Index n_covariates = 3;
    EffectKind effect = EffectKind::Heterogeneous;
    double tau0 = 2.0;
    bool confounded = false;
    double noise_sd = 1.0;
    double fe_sd = 1.0;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Adoption period per unit code; nullopt means never treated.
using AdoptionTimes = std::map<int, std::optional<double>>;

struct SimDraw {
    PanelDataset ds;
    Vector tau_true;
    AdoptionTimes adopt_time;
};

SimDraw generate(const DGPConfig& config);

struct Metrics {
    double mean_tau_hat = 0.0;
    double rmse = 0.0;
    std::optional<double> corr;
    std::optional<double> coverage;
};

Metrics evaluate(CRef<Vector> tau_hat, CRef<Vector> tau_true, const IntervalPrediction* interval = nullptr);

struct MCReport {
    DGPConfig dgp;
    HyperParams hp;
    int replications = 0;
    double alpha = 0.05;
    std::vector<Metrics> per_replication;
    Metrics aggregate;
};

/// R independent draws, each fitted, predicted with intervals on its own
/// covariates, and scored. Replication r uses seeds derived from (dgp.seed, r).
MCReport run_monte_carlo(const DGPConfig& dgp, const HyperParams& hp, int replications, double alpha = 0.05,
                         int n_partitions = 50);

std::string mc_report_json(const MCReport& report);
void write_mc_report(const MCReport& report, const std::filesystem::path& json_path,
                     const std::filesystem::path& csv_path);

/// Same honest forest, but with outcome and treatment demeaned once on the
/// full sample and nodes reusing those residuals.
CFFEForestModel fit_global_residualization_baseline(const PanelDataset& ds, const HyperParams& hp);

/// First numeric period with D = 1 for each unit.
AdoptionTimes adoption_times(const PanelDataset& ds);

struct EventStudyRow {
    int relative_time = 0;
    double mean_tau_hat = 0.0;
    Index n = 0;
};

/// Mean predicted effect of treated observations grouped by t - adoption.
std::vector<EventStudyRow> event_study(const PanelDataset& ds, const CFFEForestModel& model,
                                       const AdoptionTimes& adopt_time);

void write_event_study_csv(const std::vector<EventStudyRow>& rows, const std::filesystem::path& path);

} // namespace cffe::sim
