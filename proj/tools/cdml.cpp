// Command-line driver: simulation, estimation, hyperparameter-tuning
// demonstration, bias verification, bootstrap intervals and replication
// experiments. Emits JSON reports and tidy CSV tables; every output embeds
// the resolved configuration and base seed.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "cdml/analysis.hpp"
#include "cdml/cdml.hpp"
#include "cdml/kernels.hpp"
#include "cdml/serialize.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace cdml;

namespace {

struct config_error : error {
    using error::error;
};

struct CliOverrides {
    std::string config_path;
    std::string out;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> method;
    std::optional<std::vector<double>> gamma_grid;
    std::optional<double> rho;
    std::optional<double> sigma_u;
    std::optional<int> reps;
    bool oracle_nuisances = false;
    bool joint_stopping = false;
    bool fixed_scales = false;
    bool full_pipeline = false;
};

json load_config(const CliOverrides& cli) {
    json cfg = json::object();
    if (!cli.config_path.empty()) {
        cfg = read_json_file(cli.config_path);
        if (!cfg.is_object()) throw config_error("config file must hold a JSON object");
    }
    if (cli.seed) cfg["seed"] = *cli.seed;
    if (cli.workers) cfg["workers"] = *cli.workers;
    if (cli.method) cfg["method"] = *cli.method;
    if (cli.gamma_grid) cfg["gamma_grid"] = *cli.gamma_grid;
    if (cli.rho) cfg["dgp"]["rho"] = *cli.rho;
    if (cli.sigma_u) cfg["dgp"]["sigma_u"] = *cli.sigma_u;
    if (cli.reps) cfg["reps"] = *cli.reps;
    if (cli.oracle_nuisances) cfg["oracle_nuisances"] = true;
    if (cli.joint_stopping) cfg["joint_stopping"] = true;
    if (cli.fixed_scales) cfg["cdml"]["fixed_scales"] = true;
    if (cli.full_pipeline) cfg["bootstrap"]["full_pipeline"] = true;
    return cfg;
}

uint64_t base_seed(const json& cfg) { return cfg.value("seed", 0ULL); }

int worker_count(const json& cfg) {
    const int w = cfg.value("workers", 1);
    if (w < 1) throw config_error("workers must be >= 1");
    return w;
}

std::array<double, 3> split_fractions(const json& cfg) {
    if (!cfg.contains("splits")) return {0.5, 0.25, 0.25};
    const auto v = cfg.at("splits").get<std::vector<double>>();
    if (v.size() != 3) throw config_error("splits must list exactly three fractions");
    return {v[0], v[1], v[2]};
}

TrainConfig net_train_config(const json& cfg) {
    TrainConfig tc;
    const json net = cfg.value("net", json::object());
    tc.learning_rate = net.value("learning_rate", tc.learning_rate);
    tc.max_epochs = net.value("max_epochs", tc.max_epochs);
    tc.clip_norm = net.value("clip_norm", tc.clip_norm);
    tc.patience = net.value("patience", tc.patience);
    return tc;
}

MlpVariant net_variant(const json& cfg) {
    const std::string v = cfg.value("net", json::object()).value("variant", "three_layer");
    if (v == "three_layer") return MlpVariant::three_layer;
    if (v == "five_layer_dropout") return MlpVariant::five_layer_dropout;
    throw config_error("unknown net.variant '" + v + "'");
}

double net_keep_prob(const json& cfg) {
    return cfg.value("net", json::object()).value("keep_prob", 0.1);
}

ForestConfig forest_config(const json& cfg) {
    ForestConfig fc;
    const json f = cfg.value("forest", json::object());
    fc.n_trees = f.value("n_trees", fc.n_trees);
    fc.max_depth = f.value("max_depth", fc.max_depth);
    fc.min_samples_split = f.value("min_samples_split", fc.min_samples_split);
    fc.bootstrap = f.value("bootstrap", fc.bootstrap);
    return fc;
}

Vec gamma_grid(const json& cfg) {
    if (!cfg.contains("gamma_grid")) return default_gamma_grid();
    return cfg.at("gamma_grid").get<Vec>();
}

DgpConfig dgp_config(const json& cfg, uint64_t fallback_seed) {
    if (!cfg.contains("dgp")) throw config_error("this command needs a 'dgp' section (synthetic data)");
    DgpConfig dgp = dgp_from_json(cfg.at("dgp"));
    if (!cfg.at("dgp").contains("seed")) dgp.seed = fallback_seed;
    return dgp;
}

Dataset resolve_dataset(const json& cfg, uint64_t data_seed) {
    const bool has_csv = cfg.contains("csv");
    const bool has_dgp = cfg.contains("dgp");
    if (has_csv == has_dgp)
        throw config_error("exactly one data source is required: 'dgp' or 'csv'");
    if (has_csv) {
        const json& c = cfg.at("csv");
        if (!c.contains("path")) throw config_error("csv.path is required");
        return read_dataset_csv(c.at("path").get<std::string>(), c.value("sidecar", ""));
    }
    return sample_plr(dgp_config(cfg, data_seed));
}

std::string method_name(const json& cfg) {
    const std::string m = cfg.value("method", "dml_nn");
    if (m != "dml_nn" && m != "dml_rf" && m != "cdml")
        throw config_error("method must be one of dml_nn, dml_rf, cdml");
    return m;
}

DmlLearnerConfig dml_learner(const json& cfg, uint64_t seed, bool forest) {
    DmlLearnerConfig lc;
    lc.kind = forest ? LearnerKind::forest : LearnerKind::mlp;
    if (cfg.value("oracle_nuisances", false)) lc.kind = LearnerKind::oracle;
    lc.variant = net_variant(cfg);
    lc.five_layer_keep_prob = net_keep_prob(cfg);
    lc.train = net_train_config(cfg);
    lc.forest = forest_config(cfg);
    lc.seed = seed;
    return lc;
}

CdmlOptions cdml_options(const json& cfg, uint64_t seed) {
    CdmlOptions opt;
    opt.raw_grid = gamma_grid(cfg);
    opt.net.variant = net_variant(cfg);
    opt.net.five_layer_keep_prob = net_keep_prob(cfg);
    opt.net.train = net_train_config(cfg);
    opt.fixed_scales = cfg.value("cdml", json::object()).value("fixed_scales", false);
    opt.seed = seed;
    return opt;
}

void emit_report(const json& report, const std::string& out_path) {
    std::cout << report.dump(2) << std::endl;
    if (!out_path.empty()) write_json_file(report, out_path);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const json& cfg, const std::string& out) {
    if (out.empty()) throw config_error("simulate needs --out <dataset.csv>");
    Dataset data;
    if (cfg.contains("semisynthetic")) {
        const json& s = cfg.at("semisynthetic");
        SemiSynthConfig sc;
        if (!s.contains("csv") || !s.contains("outcome") || !s.contains("treatment"))
            throw config_error("semisynthetic needs csv, outcome and treatment fields");
        sc.outcome_col = s.at("outcome").get<std::string>();
        sc.treatment_col = s.at("treatment").get<std::string>();
        sc.theta = s.value("theta", 0.0);
        sc.heterogeneous = s.value("heterogeneous", false);
        sc.sigma_u = s.value("sigma_u", 1.0);
        sc.fit_fraction = s.value("fit_fraction", 0.5);
        sc.forest = forest_config(cfg);
        sc.seed = s.value("seed", derive_seed(base_seed(cfg), "data"));
        const RawTable raw =
            load_csv(s.at("csv").get<std::string>(), {sc.outcome_col, sc.treatment_col});
        data = build_semisynthetic(raw, sc);
    } else {
        data = sample_plr(dgp_config(cfg, derive_seed(base_seed(cfg), "data")));
    }
    write_dataset_csv(data, out);
    const std::string sidecar = out + ".truth.json";
    write_truth_sidecar(data, sidecar);
    json summary{{"schema_version", kSchemaVersion},
                 {"rows", data.n()},
                 {"features", data.d()},
                 {"dataset", out},
                 {"sidecar", sidecar},
                 {"seed", base_seed(cfg)},
                 {"resolved_config", cfg}};
    std::cout << summary.dump(2) << std::endl;
    return 0;
}

// ---- estimate ------------------------------------------------------------------

struct MethodRun {
    json report;
    NuisancePair pair;
    double theta_hat = 0.0;
};

MethodRun run_method(const std::string& method, const json& cfg, const Dataset& data,
                     const SplitIndices& splits, uint64_t seed) {
    MethodRun out;
    if (method == "cdml") {
        const CdmlResult res = tune_and_run(data, splits, cdml_options(cfg, seed));
        out.report = to_json(res.report);
        out.pair = res.final_pair;
        out.theta_hat = res.report.theta_hat_final;
        return out;
    }
    if (method == "dml_nn" && cfg.value("joint_stopping", false) &&
        !cfg.value("oracle_nuisances", false)) {
        // shared early-stopping mode: both nets trained through the joint
        // gamma=0 path with unit scales
        CdmlOptions opt = cdml_options(cfg, seed);
        const JointFitResult fit =
            run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune,
                           LossWeights{1.0, 1.0, 0.0, 1.0}, opt.net, derive_seed(seed, "cdml/final"));
        EstimateReport rep = summarize_estimate(fit.resid, "mlp-joint");
        out.report = to_json(rep);
        out.pair = fit.pair;
        out.theta_hat = rep.theta_hat;
        return out;
    }
    const DmlResult res = run_dml(data, splits, dml_learner(cfg, seed, method == "dml_rf"));
    out.report = to_json(res.report);
    out.pair = res.pair;
    out.theta_hat = res.report.theta_hat;
    return out;
}

int cmd_estimate(const json& cfg, const std::string& out) {
    const uint64_t seed = base_seed(cfg);
    const Dataset data = resolve_dataset(cfg, derive_seed(seed, "data"));
    const SplitIndices splits = split_indices(data.n(), split_fractions(cfg), seed);
    const std::string method = method_name(cfg);
    MethodRun run = run_method(method, cfg, data, splits, seed);
    run.report["method"] = method;
    run.report["seed"] = seed;
    run.report["resolved_config"] = cfg;
    if (data.truth) run.report["theta_true"] = data.truth->theta;
    emit_report(run.report, out);
    if (method == "cdml" && !out.empty()) {
        // plot-ready selection-error curve
        const std::string curve = out + ".gamma_table.csv";
        std::ofstream csv(curve);
        require(csv.good(), "cannot open '" + curve + "' for writing");
        csv << "gamma_raw,gamma,theta_hat_1,phi\n";
        for (const json& row : run.report.at("gamma_table"))
            csv << fmt(row.at("gamma_raw").get<double>()) << ',' << fmt(row.at("gamma").get<double>())
                << ',' << fmt(row.at("theta_hat_1").get<double>()) << ','
                << fmt(row.at("phi").get<double>()) << '\n';
    }
    return 0;
}

// ---- experiment -----------------------------------------------------------------

struct RepOutcome {
    double sweep_value = 0.0;
    std::string method;
    int rep = 0;
    uint64_t seed = 0;
    bool ok = false;
    std::string error_msg;
    double theta = 0.0;
    double theta_hat = 0.0;
    RepRecord record;  // dm/dl filled in oracle mode
};

int cmd_experiment(const json& cfg, const std::string& out) {
    const std::string out_dir = out.empty() ? "." : out;
    fs::create_directories(out_dir);
    const uint64_t seed = base_seed(cfg);
    const int reps = cfg.value("reps", 1);
    if (reps < 1) throw config_error("reps must be >= 1");

    std::vector<std::string> methods;
    if (cfg.contains("methods"))
        methods = cfg.at("methods").get<std::vector<std::string>>();
    else
        methods = {method_name(cfg)};
    for (const auto& m : methods)
        if (m != "dml_nn" && m != "dml_rf" && m != "cdml")
            throw config_error("methods entries must be dml_nn, dml_rf or cdml");

    std::string sweep_param;
    Vec sweep_values{0.0};
    if (cfg.contains("sweep")) {
        sweep_param = cfg.at("sweep").value("param", "");
        if (sweep_param != "rho" && sweep_param != "sigma_u")
            throw config_error("sweep.param must be rho or sigma_u");
        sweep_values = cfg.at("sweep").at("values").get<Vec>();
        if (sweep_values.empty()) throw config_error("sweep.values must be non-empty");
    }

    const bool semisynth = cfg.contains("semisynthetic");
    std::optional<RawTable> raw;
    SemiSynthConfig semi_cfg;
    if (semisynth) {
        const json& s = cfg.at("semisynthetic");
        semi_cfg.outcome_col = s.at("outcome").get<std::string>();
        semi_cfg.treatment_col = s.at("treatment").get<std::string>();
        semi_cfg.theta = s.value("theta", 0.0);
        semi_cfg.heterogeneous = s.value("heterogeneous", false);
        semi_cfg.sigma_u = s.value("sigma_u", 1.0);
        semi_cfg.fit_fraction = s.value("fit_fraction", 0.5);
        semi_cfg.forest = forest_config(cfg);
        raw = load_csv(s.at("csv").get<std::string>(), {semi_cfg.outcome_col, semi_cfg.treatment_col});
        if (!sweep_param.empty()) throw config_error("sweeps apply to synthetic data only");
    }

    const auto fractions = split_fractions(cfg);
    const int n_cells = static_cast<int>(sweep_values.size());
    const int total = n_cells * reps;
    std::vector<std::vector<RepOutcome>> grid(static_cast<size_t>(total));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(worker_count(cfg)) \
    if (worker_count(cfg) > 1)
#endif
    for (int job = 0; job < total; ++job) {
        const int cell = job / reps;
        const int rep = job % reps;
        const uint64_t rep_seed = derive_seed(seed, "rep", static_cast<uint64_t>(job));
        std::vector<RepOutcome>& outcomes = grid[job];
        try {
            Dataset data;
            if (semisynth) {
                SemiSynthConfig sc = semi_cfg;
                sc.seed = derive_seed(rep_seed, "data");
                data = build_semisynthetic(*raw, sc);
            } else {
                DgpConfig dgp = dgp_config(cfg, 0);
                if (sweep_param == "rho") dgp.rho = sweep_values[cell];
                if (sweep_param == "sigma_u") dgp.sigma_u = sweep_values[cell];
                dgp.seed = derive_seed(rep_seed, "data");
                data = sample_plr(dgp);
            }
            const SplitIndices splits = split_indices(data.n(), fractions, rep_seed);
            const std::vector<int> eval_idx = splits.estimation();
            const bool oracle_errors = data.truth && data.truth->dgp;

            for (const std::string& method : methods) {
                RepOutcome o;
                o.sweep_value = sweep_values[cell];
                o.method = method;
                o.rep = rep;
                o.seed = rep_seed;
                try {
                    const MethodRun run = run_method(method, cfg, data, splits, rep_seed);
                    o.theta_hat = run.theta_hat;
                    o.theta = data.truth ? data.truth->theta : 0.0;
                    o.record.theta_hat = o.theta_hat;
                    o.record.theta = o.theta;
                    if (oracle_errors) {
                        const Matrix Xe = data.X.take(eval_idx);
                        const Vec m_true = oracle_m(*data.truth->dgp, Xe);
                        const Vec l_true = oracle_l(*data.truth->dgp, Xe);
                        const Vec m_pred = run.pair.m_hat->predict(Xe);
                        const Vec l_pred = run.pair.l_hat->predict(Xe);
                        o.record.dm.resize(Xe.rows);
                        o.record.dl.resize(Xe.rows);
                        for (int i = 0; i < Xe.rows; ++i) {
                            o.record.dm[i] = m_true[i] - m_pred[i];
                            o.record.dl[i] = l_true[i] - l_pred[i];
                        }
                    }
                    o.ok = true;
                } catch (const std::exception& e) {
                    o.error_msg = e.what();
                }
                outcomes.push_back(std::move(o));
            }
        } catch (const std::exception& e) {
            for (const std::string& method : methods) {
                RepOutcome o;
                o.sweep_value = sweep_values[cell];
                o.method = method;
                o.rep = rep;
                o.seed = rep_seed;
                o.error_msg = e.what();
                outcomes.push_back(std::move(o));
            }
        }
    }

    // tidy per-replication table
    const std::string csv_path = out_dir + "/metrics.csv";
    std::ofstream csv(csv_path);
    require(csv.good(), "cannot open '" + csv_path + "' for writing");
    csv << "sweep_param,sweep_value,method,rep,seed,theta,theta_hat,error,abs_cov_dm_dl,mse_m,mse_l,"
           "status\n";
    int failures = 0;
    json summary_cells = json::array();
    for (int cell = 0; cell < n_cells; ++cell) {
        for (const std::string& method : methods) {
            std::vector<RepRecord> records;
            for (int rep = 0; rep < reps; ++rep) {
                const auto& outcomes = grid[static_cast<size_t>(cell) * reps + rep];
                for (const RepOutcome& o : outcomes) {
                    if (o.method != method) continue;
                    csv << (sweep_param.empty() ? "none" : sweep_param) << ',' << fmt(o.sweep_value)
                        << ',' << o.method << ',' << o.rep << ',' << o.seed << ',';
                    if (o.ok) {
                        RepRecord rec = o.record;
                        double abs_cov = std::nan(""), mse_m = std::nan(""), mse_l = std::nan("");
                        if (!rec.dm.empty()) {
                            const MetricsReport one = replication_metrics({rec});
                            abs_cov = one.abs_cov_dm_dl;
                            mse_m = one.mse_m;
                            mse_l = one.mse_l;
                        }
                        csv << fmt(o.theta) << ',' << fmt(o.theta_hat) << ','
                            << fmt(o.theta_hat - o.theta) << ',' << fmt(abs_cov) << ',' << fmt(mse_m)
                            << ',' << fmt(mse_l) << ",ok\n";
                        records.push_back(std::move(rec));
                    } else {
                        ++failures;
                        csv << ",,,,,,failed\n";
                    }
                }
            }
            json cell_summary{{"sweep_param", sweep_param.empty() ? "none" : sweep_param},
                              {"sweep_value", sweep_values[cell]},
                              {"method", method},
                              {"n_ok", records.size()},
                              {"n_failed", reps - static_cast<int>(records.size())}};
            if (!records.empty()) cell_summary["metrics"] = to_json(replication_metrics(records));
            summary_cells.push_back(std::move(cell_summary));
        }
    }
    csv.close();

    json summary{{"schema_version", kSchemaVersion},
                 {"seed", seed},
                 {"reps", reps},
                 {"methods", methods},
                 {"cells", summary_cells},
                 {"metrics_csv", csv_path},
                 {"resolved_config", cfg}};
    write_json_file(summary, out_dir + "/summary.json");
    std::cout << summary.dump(2) << std::endl;
    if (failures > 0) {
        std::cerr << "experiment: " << failures << " replication(s) failed" << std::endl;
        return 2;
    }
    return 0;
}

// ---- bias-verify ----------------------------------------------------------------

int cmd_bias_verify(const json& cfg, const std::string& out) {
    const std::string out_dir = out.empty() ? "." : out;
    fs::create_directories(out_dir);
    const uint64_t seed = base_seed(cfg);
    const json bv = cfg.value("bias_verify", json::object());
    const int reps = bv.value("reps", cfg.value("reps", 200));
    const int mc_n = bv.value("mc_n", 100000);
    Vec sigma_l = bv.value("sigma_l", Vec{0.0});
    if (sigma_l.empty()) sigma_l = {0.0};
    if (!cfg.contains("dgp")) throw config_error("bias-verify runs on synthetic data; add a 'dgp' section");

    struct Row {
        int rep;
        double sigma;
        double err;
        double b_dml;
    };
    std::vector<std::vector<Row>> rows(static_cast<size_t>(reps));
    const auto fractions = split_fractions(cfg);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(worker_count(cfg)) \
    if (worker_count(cfg) > 1)
#endif
    for (int rep = 0; rep < reps; ++rep) {
        const uint64_t rep_seed = derive_seed(seed, "rep", static_cast<uint64_t>(rep));
        DgpConfig dgp = dgp_config(cfg, 0);
        dgp.seed = derive_seed(rep_seed, "data");
        const Dataset data = sample_plr(dgp);
        const SplitIndices splits = split_indices(data.n(), fractions, rep_seed);
        const DmlResult fit = run_dml(data, splits, dml_learner(cfg, rep_seed, false));
        const std::vector<int> eval_idx = splits.estimation();
        for (double sl : sigma_l) {
            NuisancePair pair = fit.pair;
            if (sl > 0.0) pair = perturb_lhat(pair, sl, derive_seed(rep_seed, "perturb"));
            const double theta_hat = estimate_theta(residuals(data, eval_idx, pair));
            const BiasReport bias =
                theoretical_bias(pair, dgp, data.truth->theta, mc_n, derive_seed(rep_seed, "mc"));
            rows[rep].push_back({rep, sl, theta_hat - data.truth->theta, bias.b_dml});
        }
    }

    const std::string csv_path = out_dir + "/bias_verify.csv";
    std::ofstream csv(csv_path);
    require(csv.good(), "cannot open '" + csv_path + "' for writing");
    csv << "rep,sigma_l,empirical_error,theoretical_bias\n";
    for (const auto& rep_rows : rows)
        for (const Row& r : rep_rows)
            csv << r.rep << ',' << fmt(r.sigma) << ',' << fmt(r.err) << ',' << fmt(r.b_dml) << '\n';
    csv.close();

    json per_sigma = json::array();
    for (double sl : sigma_l) {
        Vec xs, ys;
        for (const auto& rep_rows : rows)
            for (const Row& r : rep_rows)
                if (r.sigma == sl) {
                    xs.push_back(r.b_dml);
                    ys.push_back(r.err);
                }
        const LinFit fit = fit_line(xs, ys);
        double mse = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) mse += (ys[i] - xs[i]) * (ys[i] - xs[i]);
        mse /= xs.size();
        per_sigma.push_back({{"sigma_l", sl},
                             {"n", xs.size()},
                             {"slope", fit.slope},
                             {"intercept", fit.intercept},
                             {"r2", fit.r2},
                             {"mse_empirical_vs_theoretical", mse}});
    }
    json summary{{"schema_version", kSchemaVersion},
                 {"seed", seed},
                 {"reps", reps},
                 {"mc_n", mc_n},
                 {"per_sigma", per_sigma},
                 {"table_csv", csv_path},
                 {"resolved_config", cfg}};
    write_json_file(summary, out_dir + "/bias_verify_summary.json");
    std::cout << summary.dump(2) << std::endl;
    return 0;
}

// ---- bootstrap ------------------------------------------------------------------

int cmd_bootstrap(const json& cfg, const std::string& out) {
    const uint64_t seed = base_seed(cfg);
    const json bc = cfg.value("bootstrap", json::object());
    const int n_resamples = bc.value("n_resamples", 200);
    const double level = bc.value("level", 0.95);
    const bool full_pipeline = bc.value("full_pipeline", false);
    const Dataset data = resolve_dataset(cfg, derive_seed(seed, "data"));

    std::vector<int> sizes;
    if (bc.contains("sizes"))
        sizes = bc.at("sizes").get<std::vector<int>>();
    else
        sizes = {data.n()};

    const auto fractions = split_fractions(cfg);
    const std::string method = method_name(cfg);
    json rows = json::array();
    for (size_t si = 0; si < sizes.size(); ++si) {
        const int size = sizes[si];
        if (size < 20 || size > data.n())
            throw config_error("bootstrap size " + std::to_string(size) + " out of range");
        // seeded subsample of the requested size
        std::vector<int> take_idx(data.n());
        std::iota(take_idx.begin(), take_idx.end(), 0);
        Rng rng(derive_seed(seed, "subset", si));
        rng.shuffle(take_idx);
        take_idx.resize(size);
        Dataset subset;
        subset.X = data.X.take(take_idx);
        subset.D = take(data.D, take_idx);
        subset.Y = take(data.Y, take_idx);
        subset.truth = data.truth;

        const uint64_t run_seed = derive_seed(seed, "size", si);
        BootstrapCI ci;
        if (full_pipeline) {
            ci = bootstrap_ci_full(subset, fractions, dml_learner(cfg, run_seed, method == "dml_rf"),
                                   n_resamples, level, run_seed);
        } else {
            const SplitIndices splits = split_indices(size, fractions, run_seed);
            const MethodRun run = run_method(method, cfg, subset, splits, run_seed);
            ci = bootstrap_ci(subset, splits.estimation(), run.pair, n_resamples, level,
                              derive_seed(run_seed, "ci"));
        }
        json row = to_json(ci);
        row["size"] = size;
        row["mode"] = full_pipeline ? "full_pipeline" : "estimation_stage";
        rows.push_back(std::move(row));
    }

    json report{{"schema_version", kSchemaVersion},
                {"seed", seed},
                {"method", method},
                {"intervals", rows},
                {"resolved_config", cfg}};
    emit_report(report, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"double machine learning and coordinated DML for partially linear models"};
    app.require_subcommand(1);

    CliOverrides cli;
    app.add_option("--config", cli.config_path, "JSON config file");
    uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "base seed");
    int workers_val = 1;
    auto* workers_opt = app.add_option("--workers", workers_val, "replication-level parallelism");
    app.add_option("--out", cli.out, "output file or directory");
    std::string method_val;
    auto* method_opt = app.add_option("--method", method_val, "dml_nn, dml_rf or cdml");
    std::vector<double> grid_val;
    auto* grid_opt = app.add_option("--gamma-grid", grid_val, "raw penalty grid (must include 0)");
    double rho_val = 0.0;
    auto* rho_opt = app.add_option("--rho", rho_val, "covariate autocorrelation");
    double sigma_u_val = 0.0;
    auto* sigma_u_opt = app.add_option("--sigma-u", sigma_u_val, "outcome noise scale");
    int reps_val = 0;
    auto* reps_opt = app.add_option("--reps", reps_val, "replication count");
    app.add_flag("--oracle-nuisances", cli.oracle_nuisances, "inject the true nuisance functions");
    app.add_flag("--joint-stopping", cli.joint_stopping,
                 "dml_nn: train both nets with the shared early-stopping criterion");
    app.add_flag("--fixed-scales", cli.fixed_scales, "cdml: skip pilot rescaling (alpha=beta=1)");
    app.add_flag("--full-pipeline", cli.full_pipeline, "bootstrap: refit nuisances per resample");

    auto* simulate = app.add_subcommand("simulate", "write a dataset CSV plus its truth sidecar");
    auto* estimate = app.add_subcommand("estimate", "one estimation run, report on stdout");
    auto* experiment = app.add_subcommand("experiment", "replication study with optional sweep");
    auto* bias_verify = app.add_subcommand("bias-verify", "empirical vs theoretical bias table");
    auto* bootstrap = app.add_subcommand("bootstrap", "percentile bootstrap confidence intervals");
    for (auto* sub : {simulate, estimate, experiment, bias_verify, bootstrap}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*seed_opt) cli.seed = seed_val;
        if (*workers_opt) cli.workers = workers_val;
        if (*method_opt) cli.method = method_val;
        if (*grid_opt) cli.gamma_grid = grid_val;
        if (*rho_opt) cli.rho = rho_val;
        if (*sigma_u_opt) cli.sigma_u = sigma_u_val;
        if (*reps_opt) cli.reps = reps_val;
        const json cfg = load_config(cli);

        if (simulate->parsed()) return cmd_simulate(cfg, cli.out);
        if (estimate->parsed()) return cmd_estimate(cfg, cli.out);
        if (experiment->parsed()) return cmd_experiment(cfg, cli.out);
        if (bias_verify->parsed()) return cmd_bias_verify(cfg, cli.out);
        if (bootstrap->parsed()) return cmd_bootstrap(cfg, cli.out);
        return 1;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}
