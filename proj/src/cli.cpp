#include "cffe/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <regex>

#include <CLI11.hpp>

#include "cffe/csv.hpp"
#include "cffe/error.hpp"
#include "cffe/forest.hpp"
#include "cffe/panel.hpp"
#include "cffe/sim.hpp"

namespace cffe::cli {

namespace {

struct ColumnFlags {
    std::string schema = "canonical";
    std::string unit = "unit";
    std::string time = "time";
    std::string y = "y";
    std::string d = "d";
    std::vector<std::string> x;

    ColumnSchema to_schema() const
    {
        if (schema == "mpdta")
            return ColumnSchema::mpdta();
        ColumnSchema s;
        s.unit = unit;
        s.time = time;
        s.outcome = y;
        s.treatment = d;
        s.covariates = x;
        return s;
    }
};

struct DgpFlags {
    std::string effect = "heterogeneous";
    bool confounded = false;
    Index n_units = 200;
    Index n_periods = 6;
    Index n_covariates = 3;
    double tau0 = 2.0;
    double noise_sd = 1.0;
    double fe_sd = 1.0;

    sim::DGPConfig to_config(std::uint64_t seed) const
    {
        sim::DGPConfig c;
        c.effect = sim::effect_from_string(effect);
        c.confounded = confounded;
        c.n_units = n_units;
        c.n_periods = n_periods;
        c.n_covariates = n_covariates;
        c.tau0 = tau0;
        c.noise_sd = noise_sd;
        c.fe_sd = fe_sd;
        c.seed = seed;
        return c;
    }
};

struct ForestFlags {
    HyperParams hp;
    std::uint64_t seed = 0;
    bool refit_splits = false;

    HyperParams resolve(const CLI::Option* seed_opt) const
    {
        HyperParams out = hp;
        if (seed_opt != nullptr && seed_opt->count() > 0)
            out.seed = seed;
        if (refit_splits)
            out.split_search = SplitSearch::RefitChildren;
        if (const char* env = std::getenv("CFFE_THREADS")) {
            try {
                out.n_threads = std::max(0, std::stoi(env));
            } catch (const std::exception&) {
                throw Error(ErrorKind::InvalidArgument, std::string("CFFE_THREADS is not an integer: '") + env + "'");
            }
        }
        return out;
    }
};

void add_forest_flags(CLI::App* cmd, ForestFlags& f)
{
    cmd->add_option("--n-trees", f.hp.n_trees, "Number of trees")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--max-depth", f.hp.max_depth, "Maximum tree depth")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--min-leaf", f.hp.min_leaf, "Minimum observations per leaf")->capture_default_str()->check(CLI::Range(2, 1 << 30));
    cmd->add_flag("--honest,!--no-honest", f.hp.honest, "Honest structure/estimation split")->capture_default_str();
    cmd->add_option("--subsample-ratio", f.hp.subsample_ratio, "Fraction of units drawn per tree")
        ->capture_default_str()
        ->check(CLI::Range(1e-12, 1.0));
    cmd->add_option("--n-thresholds", f.hp.n_thresholds, "Candidate thresholds per feature")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_flag("--refit-splits", f.refit_splits, "Re-residualize every candidate child during split search");
}

void add_column_flags(CLI::App* cmd, ColumnFlags& c)
{
    cmd->add_option("--schema", c.schema, "Column layout")->capture_default_str()->check(CLI::IsMember({"canonical", "mpdta"}));
    cmd->add_option("--unit-col", c.unit, "Unit id column")->capture_default_str();
    cmd->add_option("--time-col", c.time, "Time id column")->capture_default_str();
    cmd->add_option("--y-col", c.y, "Outcome column")->capture_default_str();
    cmd->add_option("--d-col", c.d, "Treatment column")->capture_default_str();
    cmd->add_option("--x-cols", c.x, "Covariate columns (default: x1..xp, else all other columns)")->delimiter(',');
}

void add_dgp_flags(CLI::App* cmd, DgpFlags& g)
{
    cmd->add_option("--dgp", g.effect, "Effect kind")->capture_default_str()->check(CLI::IsMember({"placebo", "homogeneous", "heterogeneous"}));
    cmd->add_flag("--confounded", g.confounded, "Unit effects correlated with x1");
    cmd->add_option("--n-units", g.n_units, "Units")->capture_default_str()->check(CLI::Range(2, 1 << 30));
    cmd->add_option("--n-periods", g.n_periods, "Periods")->capture_default_str()->check(CLI::Range(2, 1 << 30));
    cmd->add_option("--n-covariates", g.n_covariates, "Covariates")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--tau0", g.tau0, "Homogeneous effect size")->capture_default_str();
    cmd->add_option("--noise-sd", g.noise_sd, "Idiosyncratic noise sd")->capture_default_str();
    cmd->add_option("--fe-sd", g.fe_sd, "Fixed-effect sd")->capture_default_str();
}

/// Covariate matrix from a CSV: explicit columns, else x1..xp, else every
/// column that is not an id, outcome, treatment or truth column.
Matrix read_covariates(const std::string& path, const ColumnFlags& cols)
{
    const csv::Table table = csv::read(path);
    std::vector<std::size_t> picked;
    if (!cols.x.empty()) {
        for (const auto& name : cols.x) {
            auto j = table.column(name);
            if (!j)
                throw Error(ErrorKind::MissingColumn, "'" + path + "' has no column '" + name + "'");
            picked.push_back(*j);
        }
    } else {
        static const std::regex numbered("x[0-9]+");
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (std::regex_match(table.header[j], numbered))
                picked.push_back(j);
        if (picked.empty()) {
            const std::vector<std::string> skip{cols.unit, cols.time, cols.y, cols.d, "tau_true"};
            for (std::size_t j = 0; j < table.header.size(); ++j)
                if (std::find(skip.begin(), skip.end(), table.header[j]) == skip.end())
                    picked.push_back(j);
        }
    }
    Matrix X(static_cast<Index>(table.rows.size()), static_cast<Index>(picked.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        for (std::size_t j = 0; j < picked.size(); ++j)
            X(static_cast<Index>(r), static_cast<Index>(j)) = csv::number_at(table, r, picked[j]);
    return X;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); }

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write '" + path + "'");
    return out;
}

} // namespace

int run(std::vector<std::string> args)
{
    CLI::App app{"Causal forests with fixed effects for panel data"};
    app.name("cffe");
    app.require_subcommand(1);

    ColumnFlags cols;
    DgpFlags dgp;
    ForestFlags forest;
    std::string data, out, model_path;
    double alpha = 0.05;
    int n_partitions = 50;
    int reps = 10;
    std::uint64_t seed = 42;

    auto* fit_cmd = app.add_subcommand("fit", "Train a forest on a panel CSV and save the model");
    fit_cmd->add_option("--data", data, "Panel CSV")->required();
    fit_cmd->add_option("--out", out, "Model file to write")->required();
    auto* fit_seed = fit_cmd->add_option("--seed", forest.seed, "Random seed");
    add_forest_flags(fit_cmd, forest);
    add_column_flags(fit_cmd, cols);

    auto* predict_cmd = app.add_subcommand("predict", "Predict effects (and intervals) for a covariate CSV");
    predict_cmd->add_option("--model", model_path, "Model file")->required();
    predict_cmd->add_option("--data", data, "Covariate CSV")->required();
    predict_cmd->add_option("--out", out, "Prediction CSV to write")->required();
    auto* alpha_opt = predict_cmd->add_option("--alpha", alpha, "Interval significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    predict_cmd->add_option("--n-partitions", n_partitions, "Random half-splits for the variance")->capture_default_str()->check(CLI::PositiveNumber);
    predict_cmd->add_option("--seed", seed, "Seed for the half-splits")->capture_default_str();
    add_column_flags(predict_cmd, cols);

    auto* simulate_cmd = app.add_subcommand("simulate", "Write a simulated staggered-adoption panel");
    simulate_cmd->add_option("--out", out, "CSV to write")->required();
    simulate_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    add_dgp_flags(simulate_cmd, dgp);

    auto* mc_cmd = app.add_subcommand("montecarlo", "Monte Carlo validation on a simulated DGP");
    mc_cmd->add_option("--reps", reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
    mc_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    mc_cmd->add_option("--alpha", alpha, "Interval significance level")->capture_default_str()->check(CLI::Range(1e-12, 1.0 - 1e-12));
    mc_cmd->add_option("--n-partitions", n_partitions, "Random half-splits for the variance")->capture_default_str()->check(CLI::PositiveNumber);
    mc_cmd->add_option("--out", out, "Report prefix; writes <out>.json and <out>.csv");
    add_dgp_flags(mc_cmd, dgp);
    add_forest_flags(mc_cmd, forest);

    auto* compare_cmd = app.add_subcommand("compare", "CFFE vs global residualization on a confounded draw");
    compare_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    compare_cmd->add_option("--out", out, "Optional CSV of the comparison table");
    add_dgp_flags(compare_cmd, dgp);
    add_forest_flags(compare_cmd, forest);

    auto* twfe_cmd = app.add_subcommand("twfe", "Two-way fixed-effects ATT of a panel CSV");
    twfe_cmd->add_option("--data", data, "Panel CSV")->required();
    add_column_flags(twfe_cmd, cols);

    auto* es_cmd = app.add_subcommand("eventstudy", "Mean predicted effect by time since adoption");
    es_cmd->add_option("--data", data, "Panel CSV")->required();
    es_cmd->add_option("--out", out, "CSV to write")->required();
    es_cmd->add_option("--model", model_path, "Model file (fits a new forest when omitted)");
    auto* es_seed = es_cmd->add_option("--seed", forest.seed, "Random seed when fitting");
    add_forest_flags(es_cmd, forest);
    add_column_flags(es_cmd, cols);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*fit_cmd) {
            const PanelDataset ds = load_csv(data, cols.to_schema());
            const CFFEForestModel model = fit(ds, forest.resolve(fit_seed));
            save_model(model, out);
            std::cout << "fit: n=" << ds.n_obs() << " units=" << ds.n_units() << " periods=" << ds.n_periods()
                      << " trees=" << model.trees.size() << " skipped=" << model.skipped_trees
                      << " seed=" << model.seed << '\n';
        } else if (*predict_cmd) {
            const CFFEForestModel model = load_model(model_path);
            const Matrix X = read_covariates(data, cols);
            if (X.cols() != model.n_features)
                throw Error(ErrorKind::DimensionMismatch, "model was trained on " + std::to_string(model.n_features) +
                                                              " covariates but '" + data + "' has " +
                                                              std::to_string(X.cols()));
            auto file = open_out(out);
            if (alpha_opt->count() > 0) {
                Rng rng = derive_rng(seed, 0);
                const IntervalPrediction pred = predict_interval(model, X, alpha, rng, n_partitions);
                file << "tau_hat,ci_lower,ci_upper\n";
                for (Index i = 0; i < X.rows(); ++i)
                    file << csv::format_number(pred.tau_hat(i)) << ',' << csv::format_number(pred.ci_lower(i)) << ','
                         << csv::format_number(pred.ci_upper(i)) << '\n';
            } else {
                const Vector tau = predict(model, X);
                file << "tau_hat\n";
                for (Index i = 0; i < X.rows(); ++i)
                    file << csv::format_number(tau(i)) << '\n';
            }
            std::cout << "predict: rows=" << X.rows() << " trees=" << model.trees.size() << '\n';
        } else if (*simulate_cmd) {
            const sim::SimDraw draw = sim::generate(dgp.to_config(seed));
            write_csv(draw.ds, out, {{"tau_true", draw.tau_true}});
            std::cout << "simulate: n=" << draw.ds.n_obs() << " units=" << draw.ds.n_units()
                      << " periods=" << draw.ds.n_periods() << " treated=" << fmt(draw.ds.d().mean()) << '\n';
        } else if (*mc_cmd) {
            HyperParams hp = forest.resolve(nullptr);
            hp.seed = seed;
            const sim::MCReport report = sim::run_monte_carlo(dgp.to_config(seed), hp, reps, alpha, n_partitions);
            if (!out.empty())
                sim::write_mc_report(report, out + ".json", out + ".csv");
            std::cout << "montecarlo: dgp=" << dgp.effect << " reps=" << reps
                      << " mean_tau_hat=" << fmt(report.aggregate.mean_tau_hat)
                      << " rmse=" << fmt(report.aggregate.rmse) << " corr=" << fmt(report.aggregate.corr)
                      << " coverage=" << fmt(report.aggregate.coverage) << '\n';
        } else if (*compare_cmd) {
            sim::DGPConfig config = dgp.to_config(seed);
            config.confounded = true;
            const sim::SimDraw draw = sim::generate(config);
            HyperParams hp = forest.resolve(nullptr);
            hp.seed = seed;
            const Vector cffe_tau = predict(fit(draw.ds, hp), draw.ds.X());
            const Vector base_tau = predict(sim::fit_global_residualization_baseline(draw.ds, hp), draw.ds.X());
            const sim::Metrics m_cffe = sim::evaluate(cffe_tau, draw.tau_true);
            const sim::Metrics m_base = sim::evaluate(base_tau, draw.tau_true);
            std::cout << std::left << std::setw(24) << "method" << std::setw(12) << "rmse" << "corr\n"
                      << std::setw(24) << "cffe" << std::setw(12) << fmt(m_cffe.rmse) << fmt(m_cffe.corr) << '\n'
                      << std::setw(24) << "global_residualization" << std::setw(12) << fmt(m_base.rmse)
                      << fmt(m_base.corr) << '\n';
            if (!out.empty()) {
                auto file = open_out(out);
                file << "method,rmse,corr\n"
                     << "cffe," << csv::format_number(m_cffe.rmse) << ',' << (m_cffe.corr ? csv::format_number(*m_cffe.corr) : "") << '\n'
                     << "global_residualization," << csv::format_number(m_base.rmse) << ','
                     << (m_base.corr ? csv::format_number(*m_base.corr) : "") << '\n';
            }
        } else if (*twfe_cmd) {
            const PanelDataset ds = load_csv(data, cols.to_schema());
            std::cout << std::setprecision(10) << twfe_att(ds) << '\n';
        } else if (*es_cmd) {
            const PanelDataset ds = load_csv(data, cols.to_schema());
            const CFFEForestModel model =
                model_path.empty() ? fit(ds, forest.resolve(es_seed)) : load_model(model_path);
            const auto rows = sim::event_study(ds, model, sim::adoption_times(ds));
            sim::write_event_study_csv(rows, out);
            std::cout << "eventstudy: relative_times=" << rows.size() << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "cffe: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "cffe: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k)
        args.emplace_back(argv[k]);
    return run(std::move(args));
}

} // namespace cffe::cli
