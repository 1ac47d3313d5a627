#include "cffe/sim.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cffe/csv.hpp"
#include "cffe/error.hpp"

namespace cffe::sim {

std::string to_string(EffectKind kind)
{
    switch (kind) {
    case EffectKind::Placebo: return "placebo";
    case EffectKind::Homogeneous: return "homogeneous";
    case EffectKind::Heterogeneous: return "heterogeneous";
    }
    return "unknown";
}

EffectKind effect_from_string(const std::string& name)
{
    if (name == "placebo")
        return EffectKind::Placebo;
    if (name == "homogeneous")
        return EffectKind::Homogeneous;
    if (name == "heterogeneous")
        return EffectKind::Heterogeneous;
    throw Error(ErrorKind::InvalidArgument, "unknown DGP '" + name + "' (placebo, homogeneous, heterogeneous)");
}

void DGPConfig::validate() const
{
    if (n_units < 2 || n_periods < 2 || n_covariates < 1)
        throw Error(ErrorKind::InvalidArgument, "DGP needs N >= 2, T >= 2 and p >= 1");
    if (!(noise_sd > 0.0) || !(fe_sd > 0.0))
        throw Error(ErrorKind::InvalidArgument, "DGP standard deviations must be positive");
}

SimDraw generate(const DGPConfig& config)
{
    config.validate();
    const Index N = config.n_units;
    const Index T = config.n_periods;
    const Index p = config.n_covariates;
    Rng rng = derive_rng(config.seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    // adoption in {2, ..., T} or never (encoded T + 1), each with probability 1/T
    std::uniform_int_distribution<Index> adoption(2, T + 1);

    Matrix unit_x(N, p);
    Vector alpha(N);
    std::vector<Index> adopt(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) {
        for (Index j = 0; j < p; ++j)
            unit_x(i, j) = normal(rng);
        const double nu = config.fe_sd * normal(rng);
        alpha(i) = config.confounded ? 2.0 * unit_x(i, 0) + nu : nu;
        adopt[static_cast<std::size_t>(i)] = adoption(rng);
    }
    Vector gamma(T);
    for (Index t = 0; t < T; ++t)
        gamma(t) = config.fe_sd * normal(rng);

    const Index n = N * T;
    Matrix X(n, p);
    Vector y(n), d(n), tau(n);
    std::vector<std::int64_t> units(static_cast<std::size_t>(n)), times(static_cast<std::size_t>(n));
    for (Index i = 0; i < N; ++i) {
        for (Index t = 1; t <= T; ++t) {
            const Index r = i * T + (t - 1);
            X.row(r) = unit_x.row(i);
            units[static_cast<std::size_t>(r)] = i + 1;
            times[static_cast<std::size_t>(r)] = t;
            d(r) = t >= adopt[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            switch (config.effect) {
            case EffectKind::Placebo: tau(r) = 0.0; break;
            case EffectKind::Homogeneous: tau(r) = config.tau0; break;
            case EffectKind::Heterogeneous: tau(r) = unit_x(i, 0); break;
            }
            y(r) = alpha(i) + gamma(t - 1) + tau(r) * d(r) + config.noise_sd * normal(rng);
        }
    }

    AdoptionTimes adopt_time;
    for (Index i = 0; i < N; ++i) {
        const Index a = adopt[static_cast<std::size_t>(i)];
        adopt_time.emplace(static_cast<int>(i), a <= T ? std::optional<double>(static_cast<double>(a)) : std::nullopt);
    }
    return SimDraw{PanelDataset(std::move(X), std::move(y), std::move(d), units, times), std::move(tau),
                   std::move(adopt_time)};
}

Metrics evaluate(CRef<Vector> tau_hat, CRef<Vector> tau_true, const IntervalPrediction* interval)
{
    const Index n = tau_true.size();
    if (tau_hat.size() != n || n == 0)
        throw Error(ErrorKind::LengthMismatch, "tau_hat and tau_true must be aligned and nonempty");
    Metrics m;
    m.mean_tau_hat = tau_hat.mean();
    m.rmse = std::sqrt((tau_hat - tau_true).squaredNorm() / static_cast<double>(n));

    const Vector ch = tau_hat.array() - tau_hat.mean();
    const Vector ct = tau_true.array() - tau_true.mean();
    const double var_t = ct.squaredNorm() / static_cast<double>(n);
    const double var_h = ch.squaredNorm() / static_cast<double>(n);
    if (var_t >= 1e-12 && var_h > 0.0)
        m.corr = std::clamp(ch.dot(ct) / std::sqrt(ch.squaredNorm() * ct.squaredNorm()), -1.0, 1.0);

    if (interval) {
        if (interval->ci_lower.size() != n || interval->ci_upper.size() != n)
            throw Error(ErrorKind::LengthMismatch, "interval is not aligned with tau_true");
        const auto covered =
            ((interval->ci_lower.array() <= tau_true.array()) && (tau_true.array() <= interval->ci_upper.array()))
                .count();
        m.coverage = static_cast<double>(covered) / static_cast<double>(n);
    }
    return m;
}

namespace {

std::optional<double> mean_of_present(const std::vector<Metrics>& ms, std::optional<double> Metrics::*field)
{
    double sum = 0.0;
    int count = 0;
    for (const auto& m : ms)
        if (m.*field) {
            sum += *(m.*field);
            ++count;
        }
    if (count == 0)
        return std::nullopt;
    return sum / count;
}

} // namespace

MCReport run_monte_carlo(const DGPConfig& dgp, const HyperParams& hp, int replications, double alpha,
                         int n_partitions)
{
    if (replications < 1)
        throw Error(ErrorKind::InvalidArgument, "Monte Carlo needs at least one replication");
    MCReport report;
    report.dgp = dgp;
    report.hp = hp;
    report.replications = replications;
    report.alpha = alpha;

    for (int r = 0; r < replications; ++r) {
        const auto rep = static_cast<std::uint64_t>(r);
        DGPConfig draw_config = dgp;
        draw_config.seed = derive_seed(dgp.seed, rep);
        HyperParams rep_hp = hp;
        rep_hp.seed = hp.seed ? derive_seed(*hp.seed, rep, 1) : derive_seed(dgp.seed, rep, 1);
        try {
            const SimDraw draw = generate(draw_config);
            const CFFEForestModel model = fit(draw.ds, rep_hp);
            Rng interval_rng = derive_rng(dgp.seed, rep, 2);
            const IntervalPrediction pred = predict_interval(model, draw.ds.X(), alpha, interval_rng, n_partitions);
            report.per_replication.push_back(evaluate(pred.tau_hat, draw.tau_true, &pred));
        } catch (const Error& e) {
            throw Error(e.kind(), "replication " + std::to_string(r + 1) + ": " + e.detail());
        }
    }

    double mean_tau = 0.0, rmse = 0.0;
    for (const auto& m : report.per_replication) {
        mean_tau += m.mean_tau_hat;
        rmse += m.rmse;
    }
    report.aggregate.mean_tau_hat = mean_tau / replications;
    report.aggregate.rmse = rmse / replications;
    report.aggregate.corr = mean_of_present(report.per_replication, &Metrics::corr);
    report.aggregate.coverage = mean_of_present(report.per_replication, &Metrics::coverage);
    return report;
}

namespace {

nlohmann::json metrics_json(const Metrics& m)
{
    return {{"mean_tau_hat", m.mean_tau_hat},
            {"rmse", m.rmse},
            {"corr", m.corr ? nlohmann::json(*m.corr) : nlohmann::json(nullptr)},
            {"coverage", m.coverage ? nlohmann::json(*m.coverage) : nlohmann::json(nullptr)}};
}

std::string optional_cell(const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); }

} // namespace

std::string mc_report_json(const MCReport& report)
{
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : report.per_replication)
        per.push_back(metrics_json(m));
    const nlohmann::json doc{
        {"dgp",
         {{"effect", to_string(report.dgp.effect)},
          {"tau0", report.dgp.tau0},
          {"confounded", report.dgp.confounded},
          {"n_units", report.dgp.n_units},
          {"n_periods", report.dgp.n_periods},
          {"n_covariates", report.dgp.n_covariates},
          {"noise_sd", report.dgp.noise_sd},
          {"fe_sd", report.dgp.fe_sd},
          {"seed", report.dgp.seed}}},
        {"hyperparams",
         {{"n_trees", report.hp.n_trees},
          {"max_depth", report.hp.max_depth},
          {"min_leaf", report.hp.min_leaf},
          {"honest", report.hp.honest},
          {"subsample_ratio", report.hp.subsample_ratio},
          {"n_thresholds", report.hp.n_thresholds}}},
        {"replications", report.replications},
        {"alpha", report.alpha},
        {"aggregate", metrics_json(report.aggregate)},
        {"per_replication", std::move(per)},
    };
    return doc.dump(2);
}

void write_mc_report(const MCReport& report, const std::filesystem::path& json_path,
                     const std::filesystem::path& csv_path)
{
    std::ofstream json_out(json_path);
    if (!json_out)
        throw Error(ErrorKind::Io, "cannot write '" + json_path.string() + "'");
    json_out << mc_report_json(report) << '\n';

    std::ofstream csv_out(csv_path);
    if (!csv_out)
        throw Error(ErrorKind::Io, "cannot write '" + csv_path.string() + "'");
    csv_out << "replication,mean_tau_hat,rmse,corr,coverage\n";
    for (std::size_t r = 0; r < report.per_replication.size(); ++r) {
        const auto& m = report.per_replication[r];
        csv_out << r + 1 << ',' << csv::format_number(m.mean_tau_hat) << ',' << csv::format_number(m.rmse) << ','
                << optional_cell(m.corr) << ',' << optional_cell(m.coverage) << '\n';
    }
}

CFFEForestModel fit_global_residualization_baseline(const PanelDataset& ds, const HyperParams& hp)
{
    HyperParams baseline = hp;
    baseline.residualization = Residualization::Global;
    return fit(ds, baseline);
}

AdoptionTimes adoption_times(const PanelDataset& ds)
{
    AdoptionTimes out;
    for (int u = 0; u < static_cast<int>(ds.n_units()); ++u) {
        std::optional<double> first;
        for (Index r : ds.unit_rows(u)) {
            if (ds.d()(r) != 1.0)
                continue;
            const auto t = ds.time_value(ds.time_code(r));
            if (!t)
                throw Error(ErrorKind::InvalidPanel,
                            "time label '" + ds.time_label(ds.time_code(r)) + "' is not numeric");
            if (!first || *t < *first)
                first = t;
        }
        out.emplace(u, first);
    }
    return out;
}

std::vector<EventStudyRow> event_study(const PanelDataset& ds, const CFFEForestModel& model,
                                       const AdoptionTimes& adopt_time)
{
    std::vector<Index> treated;
    for (Index r = 0; r < ds.n_obs(); ++r)
        if (ds.d()(r) == 1.0)
            treated.push_back(r);
    if (treated.empty())
        throw Error(ErrorKind::NoTreatedUnits, "no treated observations for an event study");

    const Vector tau_hat = predict(model, ds.X()(treated, Eigen::all));
    std::map<int, std::pair<double, Index>> groups;
    for (std::size_t k = 0; k < treated.size(); ++k) {
        const Index r = treated[k];
        const auto it = adopt_time.find(ds.unit_code(r));
        if (it == adopt_time.end() || !it->second)
            throw Error(ErrorKind::InvalidArgument,
                        "treated unit '" + ds.unit_label(ds.unit_code(r)) + "' has no adoption time");
        const auto t = ds.time_value(ds.time_code(r));
        if (!t)
            throw Error(ErrorKind::InvalidPanel, "time label '" + ds.time_label(ds.time_code(r)) + "' is not numeric");
        auto& g = groups[static_cast<int>(std::lround(*t - *it->second))];
        g.first += tau_hat(static_cast<Index>(k));
        ++g.second;
    }

    std::vector<EventStudyRow> rows;
    for (const auto& [rel, g] : groups)
        rows.push_back({rel, g.first / static_cast<double>(g.second), g.second});
    return rows;
}

void write_event_study_csv(const std::vector<EventStudyRow>& rows, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << "relative_time,mean_tau_hat,n\n";
    for (const auto& row : rows)
        out << row.relative_time << ',' << csv::format_number(row.mean_tau_hat) << ',' << row.n << '\n';
}

} // namespace cffe::sim
