#include "cdml/serialize.hpp"

#include <fstream>

namespace cdml {

namespace {

json tensor_to_json(const Tensor& t) { return json{{"shape", t.shape}, {"values", t.v}}; }

Tensor tensor_from_json(const json& j) {
    Tensor t(j.at("shape").get<std::vector<int>>(), j.at("values").get<Vec>());
    require(t.v.size() == Tensor::count(t.shape), "model file: tensor value count does not match its shape");
    return t;
}

void check_schema(const json& j, const char* what) {
    require(j.value("schema_version", -1) == kSchemaVersion,
            std::string(what) + ": unsupported schema_version");
}

}  // namespace

json mlp_to_json(const FittedMlp& model) {
    json layers = json::array();
    for (size_t l = 0; l < model.params.weights.size(); ++l)
        layers.push_back({{"weight", tensor_to_json(model.params.weights[l])},
                          {"bias", tensor_to_json(model.params.biases[l])}});
    json history = json::array();
    for (const auto& e : model.history) history.push_back({e.train_loss, e.holdout_loss});
    return json{{"schema_version", kSchemaVersion},
                {"kind", "mlp"},
                {"spec",
                 {{"input_dim", model.spec.input_dim},
                  {"widths", model.spec.widths},
                  {"dropout_keep_prob", model.spec.dropout_keep_prob},
                  {"dropout_after", model.spec.dropout_after}}},
                {"standardizer", {{"mean", model.standardizer.mean}, {"scale", model.standardizer.scale}}},
                {"layers", layers},
                {"history", history},
                {"stopped_epoch", model.stopped_epoch},
                {"best_epoch", model.best_epoch}};
}

FittedMlp mlp_from_json(const json& j) {
    check_schema(j, "mlp model");
    require(j.value("kind", "") == "mlp", "mlp model: wrong kind");
    FittedMlp m;
    const json& s = j.at("spec");
    m.spec.input_dim = s.at("input_dim").get<int>();
    m.spec.widths = s.at("widths").get<std::vector<int>>();
    m.spec.dropout_keep_prob = s.at("dropout_keep_prob").get<double>();
    m.spec.dropout_after = s.at("dropout_after").get<int>();
    m.standardizer.mean = j.at("standardizer").at("mean").get<Vec>();
    m.standardizer.scale = j.at("standardizer").at("scale").get<Vec>();
    for (const json& layer : j.at("layers")) {
        m.params.weights.push_back(tensor_from_json(layer.at("weight")));
        m.params.biases.push_back(tensor_from_json(layer.at("bias")));
    }
    for (const json& e : j.value("history", json::array()))
        m.history.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    m.stopped_epoch = j.value("stopped_epoch", 0);
    m.best_epoch = j.value("best_epoch", 0);
    return m;
}

json forest_to_json(const Forest& forest) {
    json trees = json::array();
    for (const Tree& t : forest.trees) {
        json feature = json::array(), threshold = json::array(), left = json::array(),
             right = json::array(), value = json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
        }
        trees.push_back({{"feature", feature},
                         {"threshold", threshold},
                         {"left", left},
                         {"right", right},
                         {"value", value}});
    }
    return json{{"schema_version", kSchemaVersion},
                {"kind", "forest"},
                {"n_features", forest.n_features},
                {"config",
                 {{"n_trees", forest.cfg.n_trees},
                  {"max_depth", forest.cfg.max_depth},
                  {"min_samples_split", forest.cfg.min_samples_split},
                  {"bootstrap", forest.cfg.bootstrap},
                  {"seed", forest.cfg.seed}}},
                {"trees", trees}};
}

Forest forest_from_json(const json& j) {
    check_schema(j, "forest model");
    require(j.value("kind", "") == "forest", "forest model: wrong kind");
    Forest f;
    f.n_features = j.at("n_features").get<int>();
    const json& c = j.at("config");
    f.cfg.n_trees = c.at("n_trees").get<int>();
    f.cfg.max_depth = c.at("max_depth").get<int>();
    f.cfg.min_samples_split = c.at("min_samples_split").get<int>();
    f.cfg.bootstrap = c.at("bootstrap").get<bool>();
    f.cfg.seed = c.at("seed").get<uint64_t>();
    for (const json& tj : j.at("trees")) {
        Tree t;
        const auto feature = tj.at("feature").get<std::vector<int>>();
        const auto threshold = tj.at("threshold").get<Vec>();
        const auto left = tj.at("left").get<std::vector<int>>();
        const auto right = tj.at("right").get<std::vector<int>>();
        const auto value = tj.at("value").get<Vec>();
        for (size_t i = 0; i < feature.size(); ++i)
            t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i]});
        f.trees.push_back(std::move(t));
    }
    return f;
}

json to_json(const DgpConfig& cfg) {
    return json{{"n", cfg.n},
                {"d", cfg.d},
                {"rho", cfg.rho},
                {"nuisance", cfg.nuisance == NuisanceId::linear_groups ? "linear_groups" : "relu_exp"},
                {"theta", cfg.theta},
                {"heterogeneous", cfg.heterogeneous},
                {"sigma_u", cfg.sigma_u},
                {"sigma_v", cfg.sigma_v},
                {"majority_threshold", cfg.majority_threshold},
                {"seed", cfg.seed}};
}

DgpConfig dgp_from_json(const json& j) {
    DgpConfig cfg;
    cfg.n = j.value("n", cfg.n);
    cfg.d = j.value("d", cfg.d);
    cfg.rho = j.value("rho", cfg.rho);
    const std::string nuisance = j.value("nuisance", "linear_groups");
    if (nuisance == "linear_groups")
        cfg.nuisance = NuisanceId::linear_groups;
    else if (nuisance == "relu_exp")
        cfg.nuisance = NuisanceId::relu_exp;
    else
        fail("dgp config: unknown nuisance pair '" + nuisance + "'");
    cfg.theta = j.value("theta", cfg.theta);
    cfg.heterogeneous = j.value("heterogeneous", cfg.heterogeneous);
    cfg.sigma_u = j.value("sigma_u", cfg.sigma_u);
    cfg.sigma_v = j.value("sigma_v", cfg.sigma_v);
    cfg.majority_threshold = j.value("majority_threshold", cfg.majority_threshold);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

json to_json(const EstimateReport& rep) {
    return json{{"schema_version", kSchemaVersion},
                {"theta_hat", rep.theta_hat},
                {"n_estimation", rep.n_estimation},
                {"sum_vhat_sq", rep.sum_vhat_sq},
                {"residuals",
                 {{"mean_treatment", rep.mean_treatment_resid},
                  {"mean_outcome", rep.mean_outcome_resid},
                  {"var_treatment", rep.var_treatment_resid},
                  {"var_outcome", rep.var_outcome_resid}}},
                {"learner", rep.learner}};
}

json to_json(const CdmlReport& rep) {
    json table = json::array();
    for (const auto& row : rep.table)
        table.push_back({{"gamma_raw", row.gamma_raw},
                         {"gamma", row.gamma},
                         {"theta_hat_1", row.theta_hat_1},
                         {"phi", row.phi},
                         {"seed", row.seed}});
    return json{{"schema_version", kSchemaVersion},
                {"theta_hat_final", rep.theta_hat_final},
                {"gamma_hat", rep.gamma_hat},
                {"gamma_table", table},
                {"theta_hat_0", rep.theta_hat_0},
                {"alpha", rep.alpha},
                {"beta", rep.beta},
                {"gamma_scale", rep.gamma_scale},
                {"final_seed", rep.final_seed}};
}

json to_json(const BiasReport& rep) {
    return json{{"schema_version", kSchemaVersion},
                {"b_dml", rep.b_dml},
                {"e_dm_dl", rep.e_dm_dl},
                {"e_dm_sq", rep.e_dm_sq},
                {"var_v", rep.var_V},
                {"theta_used", rep.theta_used},
                {"mc_n", rep.mc_n},
                {"se_dm_dl", rep.se_dm_dl},
                {"se_dm_sq", rep.se_dm_sq}};
}

json to_json(const MetricsReport& rep) {
    json j{{"schema_version", kSchemaVersion},
           {"n_reps", rep.n_reps},
           {"bias", rep.bias},
           {"se_bias", rep.se_bias},
           {"mse", rep.mse},
           {"se_mse", rep.se_mse}};
    if (rep.has_nuisance_errors) {
        j["abs_cov_dm_dl"] = rep.abs_cov_dm_dl;
        j["se_abs_cov_dm_dl"] = rep.se_abs_cov_dm_dl;
        j["mse_m"] = rep.mse_m;
        j["se_mse_m"] = rep.se_mse_m;
        j["mse_l"] = rep.mse_l;
        j["se_mse_l"] = rep.se_mse_l;
    }
    return j;
}

json to_json(const BootstrapCI& ci) {
    return json{{"schema_version", kSchemaVersion},
                {"level", ci.level},
                {"n_resamples", ci.n_resamples},
                {"lower", ci.lower},
                {"upper", ci.upper},
                {"point", ci.point}};
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    require(out.good(), "write to '" + path + "' failed");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("failed to parse '" + path + "': " + e.what());
    }
    return j;
}

void write_truth_sidecar(const Dataset& data, const std::string& path) {
    require(data.truth.has_value(), "write_truth_sidecar: dataset carries no truth record");
    const Truth& t = *data.truth;
    json j{{"schema_version", kSchemaVersion},
           {"theta", t.theta},
           {"var_v", t.var_V},
           {"sigma_u", t.sigma_u}};
    if (t.theta_i) j["theta_i"] = *t.theta_i;
    if (t.dgp) j["dgp"] = to_json(*t.dgp);
    if (t.g_surrogate) j["g_surrogate"] = "forest";  // handle lives in-process only
    write_json_file(j, path);
}

Dataset read_dataset_csv(const std::string& path, const std::string& sidecar_path) {
    const RawTable table = load_csv(path, {"D", "Y"});
    const int d_col = table.col("D");
    const int y_col = table.col("Y");
    Dataset data;
    std::vector<int> xcols;
    for (int j = 0; j < table.values.cols; ++j)
        if (j != d_col && j != y_col) xcols.push_back(j);
    data.X = Matrix(table.values.rows, static_cast<int>(xcols.size()));
    data.D.resize(table.values.rows);
    data.Y.resize(table.values.rows);
    for (int i = 0; i < table.values.rows; ++i) {
        for (size_t k = 0; k < xcols.size(); ++k)
            data.X.at(i, static_cast<int>(k)) = table.values.at(i, xcols[k]);
        data.D[i] = table.values.at(i, d_col);
        data.Y[i] = table.values.at(i, y_col);
    }
    if (!sidecar_path.empty()) {
        const json j = read_json_file(sidecar_path);
        Truth t;
        t.theta = j.value("theta", 0.0);
        t.var_V = j.value("var_v", 0.0);
        t.sigma_u = j.value("sigma_u", 0.0);
        if (j.contains("theta_i")) t.theta_i = j.at("theta_i").get<Vec>();
        if (j.contains("dgp")) t.dgp = dgp_from_json(j.at("dgp"));
        data.truth = std::move(t);
    }
    return data;
}

}  // namespace cdml
