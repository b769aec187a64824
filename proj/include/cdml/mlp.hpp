#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdml/core.hpp"
#include "cdml/regressor.hpp"
#include "cdml/rng.hpp"
#include "cdml/tape.hpp"

namespace cdml {

enum class MlpVariant { three_layer, five_layer_dropout };

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> widths;          // last width is 1
    double dropout_keep_prob = 1.0;   // train-time keep probability
    int dropout_after = -1;           // hidden layer (1-based) followed by dropout, -1 = none
};

/// three_layer: widths (d/2, d/4, 1), requires d >= 4.
/// five_layer_dropout: widths (d,d,d,d,1), dropout between layers 2 and 3.
MlpSpec make_mlp_spec(int d, MlpVariant variant, double five_layer_keep_prob = 0.1);

struct MlpParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

/// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))) weights,
/// zero biases; draw order is layer by layer, row-major.
MlpParams init_mlp_params(const MlpSpec& spec, Rng& rng);

/// Per-feature affine map fitted on the training split only and reused at
/// prediction time. Constant features get scale 1.
struct Standardizer {
    Vec mean, scale;
    void fit(const Matrix& X);
    Matrix apply(const Matrix& X) const;
};

struct TrainConfig {
    double learning_rate = 0.01;
    int max_epochs = 2000;
    double clip_norm = 3.0;
    int patience = 50;
    uint64_t seed = 0;
};

struct EpochRecord {
    double train_loss;
    double holdout_loss;
};

/// Evaluation-mode forward pass (no dropout) on already-standardized inputs.
Vec mlp_eval(const MlpSpec& spec, const MlpParams& params, const Matrix& X_std);

class FittedMlp final : public Regressor {
public:
    MlpSpec spec;
    MlpParams params;
    Standardizer standardizer;
    std::vector<EpochRecord> history;  // entry 0 is the pre-training state
    int stopped_epoch = 0;
    int best_epoch = 0;

    Vec predict(const Matrix& X) const override;
    std::string kind() const override { return "mlp"; }
};

/// Graph for one MLP on an existing tape; parameters are named
/// "<prefix>w<i>" / "<prefix>b<i>".
struct MlpGraph {
    std::vector<int> weight_ids;
    std::vector<int> bias_ids;
    int output;  // squeezed to [n]
};
MlpGraph build_mlp_graph(Tape& tape, int x_input, const MlpSpec& spec, const MlpParams& init,
                         const std::string& prefix);

struct TrainLoopResult {
    std::vector<EpochRecord> history;
    int stopped_epoch = 0;
    int best_epoch = 0;
    std::vector<Tensor> best_params;  // aligned with param_ids
};

/// Full-batch gradient descent: forward, backward, global-norm clipping, one
/// step for every parameter per epoch. Keeps the checkpoint with the lowest
/// hold-out loss (ties -> earliest epoch) and stops after `patience`
/// consecutive epochs without improvement. `holdout_loss` is evaluated after
/// each step with the tape's current parameters.
TrainLoopResult run_train_loop(Tape& tape, int loss_node, std::span<const int> param_ids,
                               const TrainConfig& cfg, const std::function<double()>& holdout_loss);

/// Trains one MLP with an MSE objective. Inputs are standardized internally
/// (statistics from the training rows only).
FittedMlp fit_mlp(const Matrix& X_train, const Vec& y_train, const Matrix& X_holdout,
                  const Vec& y_holdout, const MlpSpec& spec, const TrainConfig& cfg);

double mse(const Vec& pred, const Vec& target);

}  // namespace cdml
