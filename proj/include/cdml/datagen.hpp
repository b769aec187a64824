#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdml/core.hpp"
#include "cdml/forest.hpp"
#include "cdml/regressor.hpp"

namespace cdml {

/// Built-in nuisance function pairs. `linear_groups` switches linear
/// coefficients between a majority and a minority group; `relu_exp` uses a
/// rectified polynomial treatment model and an exponential outcome model.
enum class NuisanceId { linear_groups, relu_exp };

struct DgpConfig {
    int n = 2000;
    int d = 10;
    double rho = 0.8;
    NuisanceId nuisance = NuisanceId::linear_groups;
    double theta = 1.0;
    bool heterogeneous = false;  // individual effects Normal(theta, 1)
    double sigma_u = 1.0;
    double sigma_v = 1.0;
    double majority_threshold = 0.8416;  // standard-normal 80th percentile
    uint64_t seed = 0;
};

struct Truth {
    double theta = 0.0;
    std::optional<Vec> theta_i;
    double var_V = 0.0;
    double sigma_u = 0.0;
    std::optional<DgpConfig> dgp;                    // synthetic data only
    std::shared_ptr<const Regressor> g_surrogate;    // semi-synthetic data only
};

struct Dataset {
    Matrix X;
    Vec D;
    Vec Y;
    std::optional<Truth> truth;

    int n() const { return X.rows; }
    int d() const { return X.cols; }
};

/// Row-wise AR(1): x0 ~ N(0,1), x_j = rho*x_{j-1} + sqrt(1-rho^2)*eps_j, so
/// every column is marginally standard normal.
Matrix sample_ar1(int n, int d, double rho, uint64_t seed);

/// true = minority, assigned when the first feature strictly exceeds the
/// threshold.
std::vector<uint8_t> assign_groups(const Matrix& X, double threshold);

enum class NuisanceFn { m, g };
Vec nuisance_eval(NuisanceId id, NuisanceFn which, const Matrix& X, const std::vector<uint8_t>& minority);

Vec oracle_m(const DgpConfig& cfg, const Matrix& X);
Vec oracle_g(const DgpConfig& cfg, const Matrix& X);
/// l(X) = g(X) + theta * m(X), the regression function of Y on X.
Vec oracle_l(const DgpConfig& cfg, const Matrix& X);

/// Partially linear sample: D = m(X) + V, Y = g(X) + D*theta_i + U with
/// independent Gaussian noise; the truth record carries the full config.
Dataset sample_plr(const DgpConfig& cfg);

/// Exact nuisance functions of a synthetic DGP exposed as regressors:
/// the treatment model m(X) or the outcome model l(X) = g(X) + theta*m(X).
class OracleRegressor final : public Regressor {
public:
    enum class Target { treatment, outcome };
    OracleRegressor(DgpConfig cfg, Target target) : cfg_(std::move(cfg)), target_(target) {}
    Vec predict(const Matrix& X) const override {
        return target_ == Target::treatment ? oracle_m(cfg_, X) : oracle_l(cfg_, X);
    }
    std::string kind() const override { return target_ == Target::treatment ? "oracle_m" : "oracle_l"; }

private:
    DgpConfig cfg_;
    Target target_;
};

NuisancePair oracle_pair(const DgpConfig& cfg);

// ---- CSV ingestion and semi-synthetic construction --------------------------

struct RawTable {
    std::vector<std::string> columns;
    Matrix values;

    int col(const std::string& name) const;
};

/// Header row required; every cell must parse as a finite number. Errors name
/// the offending line or column.
RawTable load_csv(const std::string& path, const std::vector<std::string>& required_columns = {});

struct SemiSynthConfig {
    std::string outcome_col;
    std::string treatment_col;
    ForestConfig forest;
    double fit_fraction = 0.5;  // rows used to fit the surrogate; the rest are emitted
    double theta = 0.0;
    bool heterogeneous = false;
    double sigma_u = 1.0;
    uint64_t seed = 0;
};

/// Fits a random-forest surrogate for the outcome on one row split and emits
/// the other split with a simulated outcome g_RF(X) + D*theta_i + U, so the
/// true effect is known.
Dataset build_semisynthetic(const RawTable& raw, const SemiSynthConfig& cfg);

/// Columns x0..x{d-1},D,Y; values round-trip exactly.
void write_dataset_csv(const Dataset& data, const std::string& path);
/// JSON sidecar with the truth record (and DGP config when synthetic).
void write_truth_sidecar(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path, const std::string& sidecar_path = "");

}  // namespace cdml
