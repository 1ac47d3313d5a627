#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cffe/forest.hpp"

namespace cffe {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "cffe-forest";

json rows_to_json(const RowSet& rows) { return json(rows.vector()); }

RowSet rows_from_json(const json& j) { return RowSet::from_sorted(j.get<std::vector<Index>>()); }

json hyperparams_to_json(const HyperParams& hp)
{
    return json{
        {"n_trees", hp.n_trees},
        {"max_depth", hp.max_depth},
        {"min_leaf", hp.min_leaf},
        {"honest", hp.honest},
        {"subsample_ratio", hp.subsample_ratio},
        {"n_thresholds", hp.n_thresholds},
        {"seed", hp.seed ? json(*hp.seed) : json(nullptr)},
        {"residualization", hp.residualization == Residualization::NodeLevel ? "node" : "global"},
        {"split_search", hp.split_search == SplitSearch::ParentResiduals ? "parent" : "refit"},
        {"demean_tol", hp.demean.tol},
        {"demean_max_iter", hp.demean.max_iter},
    };
}

HyperParams hyperparams_from_json(const json& j)
{
    HyperParams hp;
    hp.n_trees = j.at("n_trees").get<int>();
    hp.max_depth = j.at("max_depth").get<int>();
    hp.min_leaf = j.at("min_leaf").get<int>();
    hp.honest = j.at("honest").get<bool>();
    hp.subsample_ratio = j.at("subsample_ratio").get<double>();
    hp.n_thresholds = j.at("n_thresholds").get<int>();
    if (!j.at("seed").is_null())
        hp.seed = j.at("seed").get<std::uint64_t>();
    const auto residualization = j.at("residualization").get<std::string>();
    if (residualization != "node" && residualization != "global")
        throw Error(ErrorKind::CorruptModelFile, "unknown residualization '" + residualization + "'");
    hp.residualization = residualization == "node" ? Residualization::NodeLevel : Residualization::Global;
    const auto search = j.at("split_search").get<std::string>();
    if (search != "parent" && search != "refit")
        throw Error(ErrorKind::CorruptModelFile, "unknown split_search '" + search + "'");
    hp.split_search = search == "parent" ? SplitSearch::ParentResiduals : SplitSearch::RefitChildren;
    hp.demean.tol = j.at("demean_tol").get<double>();
    hp.demean.max_iter = j.at("demean_max_iter").get<int>();
    return hp;
}

json tree_to_json(const Tree& tree)
{
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
        if (n.is_leaf())
            nodes.push_back({{"tau_hat", n.tau_hat}, {"n_est", n.n_est}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"tau_hat", n.tau_hat},
                             {"n_est", n.n_est}});
    }
    return json{{"nodes", std::move(nodes)},
                {"structure_rows", rows_to_json(tree.structure_rows)},
                {"estimation_rows", rows_to_json(tree.estimation_rows)},
                {"subsampled_units", tree.subsampled_units}};
}

Tree tree_from_json(const json& j, Index n_features)
{
    Tree tree;
    tree.n_features = n_features;
    for (const auto& jn : j.at("nodes")) {
        TreeNode n;
        n.tau_hat = jn.at("tau_hat").get<double>();
        n.n_est = jn.at("n_est").get<Index>();
        if (jn.contains("feature")) {
            n.feature = jn.at("feature").get<int>();
            n.threshold = jn.at("threshold").get<double>();
            n.left = jn.at("left").get<int>();
            n.right = jn.at("right").get<int>();
        }
        tree.nodes.push_back(n);
    }
    const auto size = static_cast<int>(tree.nodes.size());
    if (size == 0)
        throw Error(ErrorKind::CorruptModelFile, "tree without nodes");
    for (int k = 0; k < size; ++k) {
        const auto& n = tree.nodes[static_cast<std::size_t>(k)];
        if (n.is_leaf())
            continue;
        // children are stored after their parent, so routing always terminates
        if (n.feature >= n_features || n.left <= k || n.right <= k || n.left >= size || n.right >= size)
            throw Error(ErrorKind::CorruptModelFile, "tree node " + std::to_string(k) + " has invalid links");
    }
    tree.structure_rows = rows_from_json(j.at("structure_rows"));
    tree.estimation_rows = rows_from_json(j.at("estimation_rows"));
    tree.subsampled_units = j.at("subsampled_units").get<std::vector<int>>();
    return tree;
}

} // namespace

void save_model(const CFFEForestModel& model, const std::filesystem::path& path)
{
    json trees = json::array();
    for (const auto& tree : model.trees)
        trees.push_back(tree_to_json(tree));
    const json doc{
        {"format", kFormatName},
        {"version", kModelFormatVersion},
        {"n_features", model.n_features},
        {"seed", model.seed},
        {"retried_trees", model.retried_trees},
        {"skipped_trees", model.skipped_trees},
        {"hyperparams", hyperparams_to_json(model.hp)},
        {"trees", std::move(trees)},
    };
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << doc.dump() << '\n';
    if (!out)
        throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

CFFEForestModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();

    json doc;
    try {
        doc = json::parse(buffer.str());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptModelFile, "'" + path.string() + "' is not a valid model file (" + e.what() + ")");
    }

    try {
        if (!doc.is_object() || doc.value("format", "") != kFormatName)
            throw Error(ErrorKind::CorruptModelFile, "'" + path.string() + "' is not a cffe forest model");
        const int version = doc.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw Error(ErrorKind::VersionMismatch, "model file has format version " + std::to_string(version) +
                                                        ", this build reads version " +
                                                        std::to_string(kModelFormatVersion));
        CFFEForestModel model;
        model.n_features = doc.at("n_features").get<Index>();
        if (model.n_features < 1)
            throw Error(ErrorKind::CorruptModelFile, "model has no covariates");
        model.seed = doc.at("seed").get<std::uint64_t>();
        model.retried_trees = doc.at("retried_trees").get<int>();
        model.skipped_trees = doc.at("skipped_trees").get<int>();
        model.hp = hyperparams_from_json(doc.at("hyperparams"));
        for (const auto& jt : doc.at("trees"))
            model.trees.push_back(tree_from_json(jt, model.n_features));
        if (model.trees.empty())
            throw Error(ErrorKind::CorruptModelFile, "model has no trees");
        return model;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptModelFile, "'" + path.string() + "': " + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument)
            throw Error(ErrorKind::CorruptModelFile, "'" + path.string() + "': " + e.what());
        throw;
    }
}

} // namespace cffe
