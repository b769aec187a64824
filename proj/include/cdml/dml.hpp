#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdml/datagen.hpp"
#include "cdml/forest.hpp"
#include "cdml/mlp.hpp"
#include "cdml/regressor.hpp"

namespace cdml {

/// Three-way partition of {0..n-1}: nuisance models fit on `train`,
/// early stopping and pilot estimates use `tune`, hyperparameter selection
/// uses `val`; the effect is estimated on tune+val.
struct SplitIndices {
    std::vector<int> train;
    std::vector<int> tune;
    std::vector<int> val;

    std::vector<int> estimation() const;
};

/// Uniformly random seeded partition with part sizes given by the fractions
/// (largest-remainder rounding). Default fractions: 50%/25%/25%.
SplitIndices split_indices(int n, std::array<double, 3> fractions, uint64_t seed);

/// Hold-out residuals of a fitted nuisance pair:
/// treatment[i] = D_i - m_hat(X_i), outcome[i] = Y_i - l_hat(X_i).
struct ResidualSet {
    Vec treatment;  // V-hat
    Vec outcome;    // U-hat
    std::vector<int> idx;
};

/// Errors out when the pair records training rows overlapping `idx`; data
/// splitting is the correctness premise of the estimator, not a preference.
ResidualSet residuals(const Dataset& data, const std::vector<int>& idx, const NuisancePair& pair);

/// Orthogonalized effect estimate: sum(V*U) / sum(V^2).
double estimate_theta(const ResidualSet& res);

struct EstimateReport {
    double theta_hat = 0.0;
    int n_estimation = 0;
    double sum_vhat_sq = 0.0;
    double mean_treatment_resid = 0.0;
    double mean_outcome_resid = 0.0;
    double var_treatment_resid = 0.0;
    double var_outcome_resid = 0.0;
    std::string learner;
};

EstimateReport summarize_estimate(const ResidualSet& res, const std::string& learner);

enum class LearnerKind { mlp, forest, oracle };

struct DmlLearnerConfig {
    LearnerKind kind = LearnerKind::mlp;
    MlpVariant variant = MlpVariant::three_layer;
    double five_layer_keep_prob = 0.1;
    TrainConfig train;    // seed field is ignored; streams derive from `seed`
    ForestConfig forest;  // seed field is ignored
    uint64_t seed = 0;
};

struct DmlPlan {
    std::vector<int> train_idx;  // nuisance fitting
    std::vector<int> stop_idx;   // early-stopping hold-out (MLP learners)
    std::vector<int> eval_idx;   // effect estimation
};

struct DmlResult {
    EstimateReport report;
    NuisancePair pair;
    ResidualSet resid;
};

/// Algorithm: fit m_hat (X -> D) and l_hat (X -> Y) independently on the
/// training rows, then estimate the effect from hold-out residuals.
DmlResult run_dml(const Dataset& data, const DmlPlan& plan, const DmlLearnerConfig& cfg);
DmlResult run_dml(const Dataset& data, const SplitIndices& splits, const DmlLearnerConfig& cfg);

}  // namespace cdml
