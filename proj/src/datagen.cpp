#include "cdml/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdml/rng.hpp"

namespace cdml {

Matrix sample_ar1(int n, int d, double rho, uint64_t seed) {
    require(std::abs(rho) < 1.0, "sample_ar1: |rho| must be < 1");
    Matrix X(n, d);
    Rng rng(seed);
    const double innov = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
        double prev = rng.normal();
        X.at(i, 0) = prev;
        for (int j = 1; j < d; ++j) {
            prev = rho * prev + innov * rng.normal();
            X.at(i, j) = prev;
        }
    }
    return X;
}

std::vector<uint8_t> assign_groups(const Matrix& X, double threshold) {
    require(X.cols >= 1, "assign_groups: need at least one feature");
    std::vector<uint8_t> minority(X.rows);
    for (int i = 0; i < X.rows; ++i) minority[i] = X.at(i, 0) > threshold ? 1 : 0;
    return minority;
}

namespace {
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
}

Vec nuisance_eval(NuisanceId id, NuisanceFn which, const Matrix& X, const std::vector<uint8_t>& minority) {
    require(X.cols >= 10, "nuisance_eval: built-in pairs use features up to x9, need d >= 10, got d = " +
                              std::to_string(X.cols));
    require(minority.size() == static_cast<size_t>(X.rows), "nuisance_eval: group vector length mismatch");
    Vec out(X.rows);
    for (int i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        const bool min_grp = minority[i] != 0;
        double v = 0.0;
        if (id == NuisanceId::linear_groups) {
            if (which == NuisanceFn::m)
                v = min_grp ? 10.0 * x[1] + x[3] + 5.0 * x[6] : x[1] + 10.0 * x[3] + 5.0 * x[6];
            else
                v = min_grp ? 10.0 * x[0] + x[2] + 5.0 * x[5] : x[0] + 10.0 * x[2] + 5.0 * x[5];
        } else {
            if (which == NuisanceFn::m)
                v = min_grp ? relu(-2.5 * x[1] * x[1] + x[4] + x[9])
                            : relu(0.5 * x[1] * x[1] + x[3] * x[3] * x[3] + x[5]);
            else
                v = x[9] + std::fabs(x[2]) + 0.5 * std::exp(x[4] + x[5]);
        }
        out[i] = v;
    }
    return out;
}

Vec oracle_m(const DgpConfig& cfg, const Matrix& X) {
    return nuisance_eval(cfg.nuisance, NuisanceFn::m, X, assign_groups(X, cfg.majority_threshold));
}

Vec oracle_g(const DgpConfig& cfg, const Matrix& X) {
    return nuisance_eval(cfg.nuisance, NuisanceFn::g, X, assign_groups(X, cfg.majority_threshold));
}

Vec oracle_l(const DgpConfig& cfg, const Matrix& X) {
    Vec l = oracle_g(cfg, X);
    const Vec m = oracle_m(cfg, X);
    for (size_t i = 0; i < l.size(); ++i) l[i] += cfg.theta * m[i];
    return l;
}

Dataset sample_plr(const DgpConfig& cfg) {
    require(cfg.n >= 1, "sample_plr: n must be positive");
    require(cfg.sigma_u >= 0.0 && cfg.sigma_v >= 0.0, "sample_plr: noise scales must be nonnegative");

    Dataset data;
    data.X = sample_ar1(cfg.n, cfg.d, cfg.rho, derive_seed(cfg.seed, "dgp/x"));
    const Vec m = oracle_m(cfg, data.X);
    const Vec g = oracle_g(cfg, data.X);

    Rng rng_v(derive_seed(cfg.seed, "dgp/v"));
    Rng rng_u(derive_seed(cfg.seed, "dgp/u"));
    data.D.resize(cfg.n);
    data.Y.resize(cfg.n);

    Truth truth;
    truth.theta = cfg.theta;
    truth.var_V = cfg.sigma_v * cfg.sigma_v;
    truth.sigma_u = cfg.sigma_u;
    truth.dgp = cfg;

    Vec effects(cfg.n, cfg.theta);
    if (cfg.heterogeneous) {
        Rng rng_te(derive_seed(cfg.seed, "dgp/te"));
        for (double& e : effects) e = rng_te.normal(cfg.theta, 1.0);
        truth.theta_i = effects;
    }
    for (int i = 0; i < cfg.n; ++i) {
        data.D[i] = m[i] + cfg.sigma_v * rng_v.normal();
        data.Y[i] = g[i] + data.D[i] * effects[i] + cfg.sigma_u * rng_u.normal();
    }
    data.truth = std::move(truth);
    return data;
}

NuisancePair oracle_pair(const DgpConfig& cfg) {
    NuisancePair pair;
    pair.m_hat = std::make_shared<OracleRegressor>(cfg, OracleRegressor::Target::treatment);
    pair.l_hat = std::make_shared<OracleRegressor>(cfg, OracleRegressor::Target::outcome);
    return pair;
}

int RawTable::col(const std::string& name) const {
    for (size_t j = 0; j < columns.size(); ++j)
        if (columns[j] == name) return static_cast<int>(j);
    fail("table: no column named '" + name + "'");
}

RawTable load_csv(const std::string& path, const std::vector<std::string>& required_columns) {
    std::ifstream in(path);
    require(in.good(), "load_csv: cannot open '" + path + "'");

    RawTable table;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "load_csv: '" + path + "' is empty (no header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
    }
    require(!table.columns.empty(), "load_csv: '" + path + "' has an empty header");
    for (const auto& name : required_columns)
        if (std::find(table.columns.begin(), table.columns.end(), name) == table.columns.end())
            fail("load_csv: '" + path + "' is missing required column '" + name + "'");

    const int ncols = static_cast<int>(table.columns.size());
    std::vector<double> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int j = 0;
        while (std::getline(ss, cell, ',')) {
            if (j >= ncols)
                fail("load_csv: " + path + ":" + std::to_string(lineno) + ": too many fields");
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                fail("load_csv: " + path + ":" + std::to_string(lineno) + ": cannot parse '" + cell + "'");
            }
            if (used != cell.size())
                fail("load_csv: " + path + ":" + std::to_string(lineno) + ": trailing junk in '" + cell + "'");
            if (!std::isfinite(v))
                fail("load_csv: " + path + ":" + std::to_string(lineno) + ": non-finite value '" + cell + "'");
            rows.push_back(v);
            ++j;
        }
        if (j != ncols)
            fail("load_csv: " + path + ":" + std::to_string(lineno) + ": expected " + std::to_string(ncols) +
                 " fields, got " + std::to_string(j));
    }
    table.values.rows = static_cast<int>(rows.size()) / ncols;
    table.values.cols = ncols;
    table.values.data = std::move(rows);
    return table;
}

Dataset build_semisynthetic(const RawTable& raw, const SemiSynthConfig& cfg) {
    require(cfg.fit_fraction > 0.0 && cfg.fit_fraction < 1.0, "semisynthetic: fit_fraction must be in (0,1)");
    const int outcome = raw.col(cfg.outcome_col);
    const int treatment = raw.col(cfg.treatment_col);
    require(outcome != treatment, "semisynthetic: outcome and treatment columns must differ");
    require(raw.values.cols >= 3, "semisynthetic: need at least one covariate besides outcome and treatment");
    const int n = raw.values.rows;
    require(n >= 4, "semisynthetic: too few rows");

    // covariates = everything except the outcome and treatment columns
    std::vector<int> xcols;
    for (int j = 0; j < raw.values.cols; ++j)
        if (j != outcome && j != treatment) xcols.push_back(j);

    Matrix X(n, static_cast<int>(xcols.size()));
    Vec D(n), Y(n);
    for (int i = 0; i < n; ++i) {
        for (size_t k = 0; k < xcols.size(); ++k) X.at(i, static_cast<int>(k)) = raw.values.at(i, xcols[k]);
        D[i] = raw.values.at(i, treatment);
        Y[i] = raw.values.at(i, outcome);
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "semi/split"));
    rng.shuffle(order);
    const int n_fit = std::max(1, std::min(n - 1, static_cast<int>(std::lround(cfg.fit_fraction * n))));
    std::vector<int> fit_idx(order.begin(), order.begin() + n_fit);
    std::vector<int> emit_idx(order.begin() + n_fit, order.end());

    ForestConfig fcfg = cfg.forest;
    fcfg.seed = derive_seed(cfg.seed, "semi/forest");
    auto surrogate = std::make_shared<ForestModel>(fit_forest(X.take(fit_idx), take(Y, fit_idx), fcfg));

    Dataset out;
    out.X = X.take(emit_idx);
    out.D = take(D, emit_idx);
    const Vec g_rf = surrogate->predict(out.X);

    const int n_emit = static_cast<int>(emit_idx.size());
    Vec effects(n_emit, cfg.theta);
    Truth truth;
    truth.theta = cfg.theta;
    truth.sigma_u = cfg.sigma_u;
    truth.g_surrogate = surrogate;
    if (cfg.heterogeneous) {
        Rng rng_te(derive_seed(cfg.seed, "semi/te"));
        for (double& e : effects) e = rng_te.normal(cfg.theta, 1.0);
        truth.theta_i = effects;
    }
    Rng rng_u(derive_seed(cfg.seed, "semi/u"));
    out.Y.resize(n_emit);
    for (int i = 0; i < n_emit; ++i) out.Y[i] = g_rf[i] + out.D[i] * effects[i] + cfg.sigma_u * rng_u.normal();
    out.truth = std::move(truth);
    return out;
}

namespace {
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace

void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "write_dataset_csv: cannot open '" + path + "' for writing");
    for (int j = 0; j < data.d(); ++j) out << 'x' << j << ',';
    out << "D,Y\n";
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.d(); ++j) out << fmt_double(data.X.at(i, j)) << ',';
        out << fmt_double(data.D[i]) << ',' << fmt_double(data.Y[i]) << '\n';
    }
    require(out.good(), "write_dataset_csv: write to '" + path + "' failed");
}

}  // namespace cdml
