#include "cdml/mlp.hpp"

#include <cmath>

#include "cdml/kernels.hpp"

namespace cdml {

namespace k = kernels;

MlpSpec make_mlp_spec(int d, MlpVariant variant, double five_layer_keep_prob) {
    MlpSpec spec;
    spec.input_dim = d;
    if (variant == MlpVariant::three_layer) {
        require(d >= 4, "make_mlp_spec: three_layer variant needs input_dim >= 4, got " + std::to_string(d));
        spec.widths = {d / 2, d / 4, 1};
    } else {
        require(d >= 1, "make_mlp_spec: input_dim must be positive");
        require(five_layer_keep_prob > 0.0 && five_layer_keep_prob <= 1.0,
                "make_mlp_spec: keep probability must be in (0,1]");
        spec.widths = {d, d, d, d, 1};
        spec.dropout_keep_prob = five_layer_keep_prob;
        spec.dropout_after = 2;
    }
    return spec;
}

MlpParams init_mlp_params(const MlpSpec& spec, Rng& rng) {
    MlpParams p;
    int fan_in = spec.input_dim;
    for (int w : spec.widths) {
        const double limit = std::sqrt(6.0 / (fan_in + w));
        Tensor weight({fan_in, w});
        for (double& x : weight.v) x = (2.0 * rng.uniform() - 1.0) * limit;
        p.weights.push_back(std::move(weight));
        p.biases.emplace_back(std::vector<int>{w});
        fan_in = w;
    }
    return p;
}

void Standardizer::fit(const Matrix& X) {
    mean.assign(X.cols, 0.0);
    scale.assign(X.cols, 1.0);
    if (X.rows == 0) return;
    for (int i = 0; i < X.rows; ++i)
        for (int j = 0; j < X.cols; ++j) mean[j] += X.at(i, j);
    for (int j = 0; j < X.cols; ++j) mean[j] /= X.rows;
    Vec var(X.cols, 0.0);
    for (int i = 0; i < X.rows; ++i)
        for (int j = 0; j < X.cols; ++j) {
            const double c = X.at(i, j) - mean[j];
            var[j] += c * c;
        }
    for (int j = 0; j < X.cols; ++j) {
        const double sd = std::sqrt(var[j] / X.rows);
        scale[j] = sd > 0.0 ? sd : 1.0;
    }
}

Matrix Standardizer::apply(const Matrix& X) const {
    require(static_cast<size_t>(X.cols) == mean.size(),
            "standardizer: expected " + std::to_string(mean.size()) + " features, got " + std::to_string(X.cols));
    Matrix out(X.rows, X.cols);
    for (int i = 0; i < X.rows; ++i)
        for (int j = 0; j < X.cols; ++j) out.at(i, j) = (X.at(i, j) - mean[j]) / scale[j];
    return out;
}

Vec mlp_eval(const MlpSpec& spec, const MlpParams& params, const Matrix& X_std) {
    require(X_std.cols == spec.input_dim, "mlp_eval: expected " + std::to_string(spec.input_dim) +
                                              " features, got " + std::to_string(X_std.cols));
    const int n = X_std.rows;
    Vec cur = X_std.data;
    int cur_w = spec.input_dim;
    Vec next;
    const int layers = static_cast<int>(spec.widths.size());
    for (int l = 0; l < layers; ++l) {
        const int w = spec.widths[l];
        next.assign(static_cast<size_t>(n) * w, 0.0);
        k::matmul(cur.data(), params.weights[l].v.data(), next.data(), n, cur_w, w);
        k::add_bias(next.data(), params.biases[l].v.data(), next.data(), n, w);
        if (l + 1 < layers) k::relu(next.data(), next.data(), next.size());
        cur.swap(next);
        cur_w = w;
    }
    return cur;  // width 1: already an n-vector
}

Vec FittedMlp::predict(const Matrix& X) const {
    return mlp_eval(spec, params, standardizer.apply(X));
}

MlpGraph build_mlp_graph(Tape& tape, int x_input, const MlpSpec& spec, const MlpParams& init,
                         const std::string& prefix) {
    MlpGraph g;
    int cur = x_input;
    const int layers = static_cast<int>(spec.widths.size());
    for (int l = 0; l < layers; ++l) {
        const std::string tag = std::to_string(l + 1);
        g.weight_ids.push_back(tape.add_param(prefix + "w" + tag, init.weights[l]));
        g.bias_ids.push_back(tape.add_param(prefix + "b" + tag, init.biases[l]));
        cur = tape.add_bias(tape.matmul(cur, g.weight_ids[l]), g.bias_ids[l]);
        if (l + 1 < layers) {
            cur = tape.relu(cur);
            if (spec.dropout_after == l + 1 && spec.dropout_keep_prob < 1.0)
                cur = tape.dropout(cur, spec.dropout_keep_prob);
        }
    }
    g.output = tape.squeeze(cur);
    return g;
}

TrainLoopResult run_train_loop(Tape& tape, int loss_node, std::span<const int> param_ids,
                               const TrainConfig& cfg, const std::function<double()>& holdout_loss) {
    require(cfg.learning_rate > 0.0, "train: learning_rate must be positive");
    require(cfg.max_epochs >= 1, "train: max_epochs must be at least 1");
    require(cfg.clip_norm > 0.0, "train: clip_norm must be positive");

    auto snapshot = [&] {
        std::vector<Tensor> out;
        out.reserve(param_ids.size());
        for (int id : param_ids) out.push_back(tape.param_value(id));
        return out;
    };

    std::vector<Tensor*> grads;
    grads.reserve(param_ids.size());
    for (int id : param_ids) grads.push_back(&tape.param_grad(id));

    TrainLoopResult res;
    tape.set_training(true);
    tape.forward();
    double train_loss = tape.value(loss_node).scalar();
    require(std::isfinite(train_loss), "train: non-finite loss at epoch 0");
    double hold = holdout_loss();
    res.history.push_back({train_loss, hold});
    res.best_params = snapshot();
    res.best_epoch = 0;
    double best_hold = hold;
    int bad = 0;

    int epoch = 0;
    while (epoch < cfg.max_epochs) {
        ++epoch;
        tape.backward(loss_node);
        clip_global_norm(std::span<Tensor*>(grads), cfg.clip_norm);
        for (int id : param_ids) {
            Tensor& p = tape.param_value(id);
            const Tensor& g = tape.param_grad(id);
            k::axpy(-cfg.learning_rate, g.v.data(), p.v.data(), p.v.size());
        }
        tape.forward();
        train_loss = tape.value(loss_node).scalar();
        if (!std::isfinite(train_loss)) fail("train: non-finite loss at epoch " + std::to_string(epoch));
        hold = holdout_loss();
        res.history.push_back({train_loss, hold});
        if (hold < best_hold) {
            best_hold = hold;
            res.best_epoch = epoch;
            res.best_params = snapshot();
            bad = 0;
        } else {
            ++bad;
            if (bad > cfg.patience) break;
        }
    }
    res.stopped_epoch = epoch;

    // leave the tape at the selected checkpoint
    for (size_t i = 0; i < param_ids.size(); ++i) tape.param_value(param_ids[i]) = res.best_params[i];
    tape.set_training(false);
    tape.forward();
    return res;
}

double mse(const Vec& pred, const Vec& target) {
    require(pred.size() == target.size(), "mse: length mismatch");
    Vec sq(pred.size());
    k::vsub(target.data(), pred.data(), sq.data(), sq.size());
    k::vmul(sq.data(), sq.data(), sq.data(), sq.size());
    return k::mean(sq);
}

FittedMlp fit_mlp(const Matrix& X_train, const Vec& y_train, const Matrix& X_holdout,
                  const Vec& y_holdout, const MlpSpec& spec, const TrainConfig& cfg) {
    require(X_train.rows > 0 && X_holdout.rows > 0, "fit_mlp: train and holdout sets must be non-empty");
    require(X_train.cols == X_holdout.cols, "fit_mlp: train/holdout feature count mismatch");
    require(static_cast<size_t>(X_train.rows) == y_train.size(), "fit_mlp: X/y row mismatch");

    FittedMlp model;
    model.spec = spec;
    model.standardizer.fit(X_train);
    const Matrix Xs = model.standardizer.apply(X_train);
    const Matrix Xh = model.standardizer.apply(X_holdout);

    Rng rng(derive_seed(cfg.seed, "mlp/init"));
    MlpParams init = init_mlp_params(spec, rng);

    Tape tape;
    tape.set_rng(derive_seed(cfg.seed, "mlp/dropout"));
    const int x = tape.add_input("x", {X_train.rows, spec.input_dim});
    const int y = tape.add_input("y", {X_train.rows});
    MlpGraph g = build_mlp_graph(tape, x, spec, init, "");
    const int resid = tape.sub(y, g.output);
    const int loss = tape.mean(tape.square(resid));
    tape.set_input("x", Xs.data);
    tape.set_input("y", y_train);

    std::vector<int> params;
    for (size_t l = 0; l < g.weight_ids.size(); ++l) {
        params.push_back(g.weight_ids[l]);
        params.push_back(g.bias_ids[l]);
    }

    auto current_params = [&] {
        MlpParams p;
        for (size_t l = 0; l < g.weight_ids.size(); ++l) {
            p.weights.push_back(tape.param_value(g.weight_ids[l]));
            p.biases.push_back(tape.param_value(g.bias_ids[l]));
        }
        return p;
    };
    auto holdout_eval = [&] { return mse(mlp_eval(spec, current_params(), Xh), y_holdout); };

    TrainLoopResult res = run_train_loop(tape, loss, params, cfg, holdout_eval);
    model.params = current_params();  // loop restored the best checkpoint
    model.history = std::move(res.history);
    model.stopped_epoch = res.stopped_epoch;
    model.best_epoch = res.best_epoch;
    return model;
}

}  // namespace cdml
