#pragma once

#include <cstdint>
#include <vector>

#include "cdml/dml.hpp"

namespace cdml {

/// Coefficients of the coordinated loss
///   alpha*mean(V^2) + beta*mean(U^2) + gamma*|mean(V*U)|
/// where V and U are the current treatment/outcome residuals of the batch.
/// `gamma` is the effective (already scaled) penalty; `gamma_scale` records
/// the factor applied to the raw grid.
struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.0;
    double gamma_scale = 1.0;
};

double joint_loss(const Vec& treatment_resid, const Vec& outcome_resid, const LossWeights& w);

/// Inverse pilot moments: alpha = 1/mean(V^2), beta = 1/mean(U^2),
/// gamma_scale = 1/|mean(V*U)|, all from the pilot residual set.
struct Scales {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma_scale = 1.0;
};
Scales compute_scales(const ResidualSet& pilot);

struct GammaGrid {
    Vec raw;     // must contain 0
    Vec scaled;  // raw * gamma_scale, order-preserving
};
GammaGrid make_gamma_grid(const Vec& raw, double gamma_scale);
Vec default_gamma_grid();  // {0, 0.01, 0.1, 0.5, 1, 5, 10}

/// Hold-out selection error for a candidate effect estimate:
/// mean of (Y - g0 - D*theta)^2 over the supplied rows.
double holdout_phi(const Vec& y, const Vec& d, const Vec& g0, double theta);

struct CdmlNetConfig {
    MlpVariant variant = MlpVariant::three_layer;
    double five_layer_keep_prob = 0.1;
    TrainConfig train;  // seed field is ignored; callers pass a run seed
    /// Overrides the variant's layer widths (e.g. {1} for a purely linear
    /// model); mainly for fixtures and capacity studies.
    std::optional<std::vector<int>> custom_widths;
};

MlpSpec resolve_net_spec(int input_dim, const CdmlNetConfig& net);

struct JointFitResult {
    NuisancePair pair;   // both nets, disjoint parameters, shared standardizer
    double theta_hat = 0.0;
    ResidualSet resid;
    std::vector<EpochRecord> history;
    int stopped_epoch = 0;
    int best_epoch = 0;
};

/// Trains m_hat and l_hat simultaneously on the training rows by full-batch
/// descent on the joint loss (single combined, globally clipped gradient step
/// per epoch), early-stopped on the hold-out joint loss, then estimates the
/// effect on `eval_idx`.
JointFitResult run_cdml_fixed(const Dataset& data, const std::vector<int>& train_idx,
                              const std::vector<int>& eval_idx, const std::vector<int>& stop_idx,
                              const LossWeights& w, const CdmlNetConfig& net, uint64_t seed);

struct CdmlGammaRow {
    double gamma_raw = 0.0;
    double gamma = 0.0;  // scaled
    double theta_hat_1 = 0.0;
    double phi = 0.0;
    uint64_t seed = 0;
};

struct CdmlReport {
    double theta_hat_final = 0.0;
    double gamma_hat = 0.0;  // scaled, member of the grid
    std::vector<CdmlGammaRow> table;
    double theta_hat_0 = 0.0;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma_scale = 1.0;
    uint64_t final_seed = 0;
};

struct CdmlOptions {
    Vec raw_grid = default_gamma_grid();
    CdmlNetConfig net;
    /// Skip the pilot-derived rescaling and use alpha = beta = gamma_scale = 1.
    bool fixed_scales = false;
    uint64_t seed = 0;
    /// Run the per-gamma fits concurrently (deterministic either way).
    bool parallel_grid = true;
};

struct CdmlResult {
    CdmlReport report;
    NuisancePair final_pair;
    ResidualSet final_resid;
};

/// Full tuning pipeline: pilot DML on train+tune, scale derivation, one joint
/// fit per grid value scored by the hold-out prediction error
///   phi = mean over val of (Y - g0(X) - D*theta_1(gamma))^2
/// with g0 frozen from the pilot, then a final joint fit at the selected
/// gamma evaluated on tune+val. Seed streams: "cdml/pilot", "cdml/gamma" by
/// grid index, "cdml/final".
CdmlResult tune_and_run(const Dataset& data, const SplitIndices& splits, const CdmlOptions& options);

}  // namespace cdml
