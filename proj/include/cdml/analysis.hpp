#pragma once

#include <cstdint>
#include <vector>

#include "cdml/datagen.hpp"
#include "cdml/dml.hpp"

namespace cdml {

/// Leading-order estimation bias of a fitted nuisance pair under a known
/// synthetic DGP:
///   (E[dm*dl] - theta*E[dm^2]) / (Var(V) + E[dm^2]),
/// with dm = m - m_hat, dl = l - l_hat and the expectations over fresh
/// covariate draws (the fitted pair is fixed, so conditioning on the training
/// data reduces to integrating over X).
struct BiasReport {
    double b_dml = 0.0;
    double e_dm_dl = 0.0;
    double e_dm_sq = 0.0;
    double var_V = 0.0;
    double theta_used = 0.0;
    int mc_n = 0;
    double se_dm_dl = 0.0;
    double se_dm_sq = 0.0;
};

BiasReport theoretical_bias(const NuisancePair& pair, const DgpConfig& dgp, double theta, int mc_n,
                            uint64_t seed);

/// Adds a fixed Gaussian perturbation to every outcome-model prediction,
/// keyed by a hash of the covariate row and the seed, so the perturbed model
/// stays a deterministic function of X.
NuisancePair perturb_lhat(const NuisancePair& pair, double sigma_l, uint64_t seed);

class PerturbedRegressor final : public Regressor {
public:
    PerturbedRegressor(std::shared_ptr<const Regressor> base, double sigma, uint64_t seed)
        : base_(std::move(base)), sigma_(sigma), seed_(seed) {}
    Vec predict(const Matrix& X) const override;
    std::string kind() const override { return base_->kind() + "+noise"; }

private:
    std::shared_ptr<const Regressor> base_;
    double sigma_;
    uint64_t seed_;
};

/// One replication of a simulation study. `dm`/`dl` are hold-out evaluations
/// of the nuisance errors (synthetic oracle mode); leave them empty when no
/// oracle is available.
struct RepRecord {
    double theta_hat = 0.0;
    double theta = 0.0;
    Vec dm;
    Vec dl;
};

struct MetricsReport {
    int n_reps = 0;
    double bias = 0.0, se_bias = 0.0;
    double mse = 0.0, se_mse = 0.0;
    bool has_nuisance_errors = false;
    double abs_cov_dm_dl = 0.0, se_abs_cov_dm_dl = 0.0;
    double mse_m = 0.0, se_mse_m = 0.0;
    double mse_l = 0.0, se_mse_l = 0.0;
    // per-replication values, aligned with the input order
    Vec rep_error;
    Vec rep_abs_cov;
    Vec rep_mse_m;
    Vec rep_mse_l;
};

MetricsReport replication_metrics(const std::vector<RepRecord>& records);

struct BootstrapCI {
    double level = 0.95;
    int n_resamples = 200;
    double lower = 0.0;
    double upper = 0.0;
    double point = 0.0;
};

/// Percentile bootstrap over the estimation rows with the nuisance pair
/// frozen: each resample redraws rows with replacement and recomputes the
/// effect estimate from the precomputed residuals.
BootstrapCI bootstrap_ci(const Dataset& data, const std::vector<int>& eval_idx, const NuisancePair& pair,
                         int n_resamples = 200, double level = 0.95, uint64_t seed = 0);

/// Full-pipeline variant: every resample redraws the whole dataset, re-splits
/// and refits the nuisance models. Expensive; exposed behind a CLI flag.
BootstrapCI bootstrap_ci_full(const Dataset& data, const std::array<double, 3>& fractions,
                              const DmlLearnerConfig& learner, int n_resamples = 200, double level = 0.95,
                              uint64_t seed = 0);

/// Percentile order statistics: with B values and tail mass (1-level)/2 per
/// side, returns the ceil(B*tail)-th smallest and floor(B*(1-tail))-th
/// smallest values.
std::pair<double, double> percentile_bounds(Vec stats, double level);

struct LinFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
};
/// Ordinary least squares of y on x with intercept.
LinFit fit_line(const Vec& x, const Vec& y);

}  // namespace cdml
