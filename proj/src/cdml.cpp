#include "cdml/cdml.hpp"

#include <algorithm>
#include <cmath>

#include "cdml/kernels.hpp"
#include "cdml/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdml {

namespace k = kernels;

double joint_loss(const Vec& treatment_resid, const Vec& outcome_resid, const LossWeights& w) {
    require(!treatment_resid.empty() && treatment_resid.size() == outcome_resid.size(),
            "joint_loss: residual vectors must be non-empty and equal length");
    Vec buf(treatment_resid.size());
    k::vsquare(treatment_resid.data(), buf.data(), buf.size());
    const double mv2 = k::mean(buf);
    k::vsquare(outcome_resid.data(), buf.data(), buf.size());
    const double mu2 = k::mean(buf);
    k::vmul(treatment_resid.data(), outcome_resid.data(), buf.data(), buf.size());
    const double mvu = k::mean(buf);
    // same term order as the training graph so monitored values agree exactly
    return w.alpha * mv2 + w.beta * mu2 + w.gamma * std::fabs(mvu);
}

Scales compute_scales(const ResidualSet& pilot) {
    require(!pilot.treatment.empty(), "compute_scales: empty pilot residual set");
    Vec buf(pilot.treatment.size());
    k::vsquare(pilot.treatment.data(), buf.data(), buf.size());
    const double mv2 = k::mean(buf);
    k::vsquare(pilot.outcome.data(), buf.data(), buf.size());
    const double mu2 = k::mean(buf);
    k::vmul(pilot.treatment.data(), pilot.outcome.data(), buf.data(), buf.size());
    const double mvu = std::fabs(k::mean(buf));
    require(mv2 > 0.0, "compute_scales: pilot treatment residuals are all zero; cannot set alpha");
    require(mu2 > 0.0, "compute_scales: pilot outcome residuals are all zero; cannot set beta");
    require(mvu > 0.0,
            "compute_scales: pilot residual covariance is zero; the penalty scale is undefined "
            "(degenerate pilot residuals, e.g. exactly orthogonal residuals)");
    return {1.0 / mv2, 1.0 / mu2, 1.0 / mvu};
}

GammaGrid make_gamma_grid(const Vec& raw, double gamma_scale) {
    require(!raw.empty(), "gamma grid: raw grid must be non-empty");
    require(gamma_scale > 0.0, "gamma grid: scale must be positive");
    bool has_zero = false;
    for (double g : raw) {
        require(g >= 0.0, "gamma grid: entries must be nonnegative");
        has_zero = has_zero || g == 0.0;
    }
    require(has_zero, "gamma grid: must contain 0 so tuning can fall back to uncoordinated fits");
    GammaGrid grid;
    grid.raw = raw;
    grid.scaled.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) grid.scaled[i] = raw[i] * gamma_scale;
    return grid;
}

Vec default_gamma_grid() { return {0.0, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0}; }

MlpSpec resolve_net_spec(int input_dim, const CdmlNetConfig& net) {
    if (!net.custom_widths) return make_mlp_spec(input_dim, net.variant, net.five_layer_keep_prob);
    MlpSpec spec;
    spec.input_dim = input_dim;
    spec.widths = *net.custom_widths;
    require(!spec.widths.empty() && spec.widths.back() == 1, "custom net widths must end in 1");
    for (int w : spec.widths) require(w >= 1, "custom net widths must be positive");
    return spec;
}

double holdout_phi(const Vec& y, const Vec& d, const Vec& g0, double theta) {
    require(!y.empty() && y.size() == d.size() && y.size() == g0.size(),
            "holdout_phi: input vectors must be non-empty and equal length");
    Vec sq(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - g0[i] - d[i] * theta;
        sq[i] = r * r;
    }
    return k::mean(sq);
}

JointFitResult run_cdml_fixed(const Dataset& data, const std::vector<int>& train_idx,
                              const std::vector<int>& eval_idx, const std::vector<int>& stop_idx,
                              const LossWeights& w, const CdmlNetConfig& net, uint64_t seed) {
    require(!train_idx.empty() && !eval_idx.empty() && !stop_idx.empty(),
            "run_cdml_fixed: train, eval and stop sets must be non-empty");
    require(w.alpha > 0.0 && w.beta > 0.0 && w.gamma >= 0.0,
            "run_cdml_fixed: need alpha, beta > 0 and gamma >= 0");
    {
        std::vector<int> fit_sorted = train_idx;
        std::sort(fit_sorted.begin(), fit_sorted.end());
        for (int i : eval_idx)
            require(!std::binary_search(fit_sorted.begin(), fit_sorted.end(), i),
                    "run_cdml_fixed: train and eval sets overlap at row " + std::to_string(i));
    }

    const Matrix Xt_raw = data.X.take(train_idx);
    const Vec Dt = take(data.D, train_idx);
    const Vec Yt = take(data.Y, train_idx);
    const Matrix Xh_raw = data.X.take(stop_idx);
    const Vec Dh = take(data.D, stop_idx);
    const Vec Yh = take(data.Y, stop_idx);

    Standardizer standardizer;
    standardizer.fit(Xt_raw);
    const Matrix Xt = standardizer.apply(Xt_raw);
    const Matrix Xh = standardizer.apply(Xh_raw);

    const MlpSpec spec = resolve_net_spec(data.d(), net);
    Rng init_rng(derive_seed(seed, "joint/init"));
    const MlpParams m_init = init_mlp_params(spec, init_rng);
    const MlpParams l_init = init_mlp_params(spec, init_rng);

    const int nt = static_cast<int>(train_idx.size());
    Tape tape;
    tape.set_rng(derive_seed(seed, "joint/dropout"));
    const int x = tape.add_input("x", {nt, spec.input_dim});
    const int d_in = tape.add_input("d", {nt});
    const int y_in = tape.add_input("y", {nt});
    const MlpGraph gm = build_mlp_graph(tape, x, spec, m_init, "m.");
    const MlpGraph gl = build_mlp_graph(tape, x, spec, l_init, "l.");
    const int v_res = tape.sub(d_in, gm.output);
    const int u_res = tape.sub(y_in, gl.output);
    const int loss = tape.combine({tape.mean(tape.square(v_res)), tape.mean(tape.square(u_res)),
                                   tape.abs(tape.mean(tape.mul(v_res, u_res)))},
                                  {w.alpha, w.beta, w.gamma});
    tape.set_input("x", Xt.data);
    tape.set_input("d", Dt);
    tape.set_input("y", Yt);

    std::vector<int> params;
    for (const MlpGraph* g : {&gm, &gl})
        for (size_t l = 0; l < g->weight_ids.size(); ++l) {
            params.push_back(g->weight_ids[l]);
            params.push_back(g->bias_ids[l]);
        }

    auto collect = [&](const MlpGraph& g) {
        MlpParams p;
        for (size_t l = 0; l < g.weight_ids.size(); ++l) {
            p.weights.push_back(tape.param_value(g.weight_ids[l]));
            p.biases.push_back(tape.param_value(g.bias_ids[l]));
        }
        return p;
    };
    Vec vh(stop_idx.size()), uh(stop_idx.size());
    auto holdout_eval = [&] {
        const Vec mp = mlp_eval(spec, collect(gm), Xh);
        const Vec lp = mlp_eval(spec, collect(gl), Xh);
        k::vsub(Dh.data(), mp.data(), vh.data(), vh.size());
        k::vsub(Yh.data(), lp.data(), uh.data(), uh.size());
        return joint_loss(vh, uh, w);
    };

    TrainConfig tc = net.train;
    tc.seed = seed;
    TrainLoopResult loop = run_train_loop(tape, loss, params, tc, holdout_eval);

    JointFitResult out;
    auto finish = [&](const MlpGraph& g) {
        auto fit = std::make_shared<FittedMlp>();
        fit->spec = spec;
        fit->params = collect(g);
        fit->standardizer = standardizer;
        fit->history = loop.history;
        fit->stopped_epoch = loop.stopped_epoch;
        fit->best_epoch = loop.best_epoch;
        return fit;
    };
    out.pair.m_hat = finish(gm);
    out.pair.l_hat = finish(gl);
    out.pair.fit_idx = train_idx;
    out.history = std::move(loop.history);
    out.stopped_epoch = loop.stopped_epoch;
    out.best_epoch = loop.best_epoch;
    out.resid = residuals(data, eval_idx, out.pair);
    out.theta_hat = estimate_theta(out.resid);
    return out;
}

CdmlResult tune_and_run(const Dataset& data, const SplitIndices& splits, const CdmlOptions& options) {
    require(!options.raw_grid.empty(), "tune_and_run: gamma grid must be non-empty");

    // pilot: standard DML on train+tune (fit on train, estimate on tune)
    DmlLearnerConfig pilot_cfg;
    pilot_cfg.kind = LearnerKind::mlp;
    pilot_cfg.variant = options.net.variant;
    pilot_cfg.five_layer_keep_prob = options.net.five_layer_keep_prob;
    pilot_cfg.train = options.net.train;
    pilot_cfg.seed = derive_seed(options.seed, "cdml/pilot");
    DmlPlan pilot_plan{splits.train, splits.tune, splits.tune};
    const DmlResult pilot = run_dml(data, pilot_plan, pilot_cfg);
    const double theta_0 = pilot.report.theta_hat;

    Scales scales;
    if (!options.fixed_scales) scales = compute_scales(pilot.resid);
    const GammaGrid grid = make_gamma_grid(options.raw_grid, scales.gamma_scale);

    // g0(X) := l0(X) - theta_0 * m0(X), frozen for the whole grid search
    const Matrix Xval = data.X.take(splits.val);
    const Vec Dval = take(data.D, splits.val);
    const Vec Yval = take(data.Y, splits.val);
    Vec g0 = pilot.pair.l_hat->predict(Xval);
    {
        const Vec m0 = pilot.pair.m_hat->predict(Xval);
        for (size_t i = 0; i < g0.size(); ++i) g0[i] -= theta_0 * m0[i];
    }
    auto phi_of = [&](double theta_1) { return holdout_phi(Yval, Dval, g0, theta_1); };

    const int n_gamma = static_cast<int>(grid.raw.size());
    std::vector<CdmlGammaRow> table(n_gamma);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) \
    if (options.parallel_grid && k::parallel_enabled() && !omp_in_parallel())
#endif
    for (int gi = 0; gi < n_gamma; ++gi) {
        LossWeights w{scales.alpha, scales.beta, grid.scaled[gi], scales.gamma_scale};
        const uint64_t gamma_seed = derive_seed(options.seed, "cdml/gamma", static_cast<uint64_t>(gi));
        const JointFitResult fit =
            run_cdml_fixed(data, splits.train, splits.tune, splits.tune, w, options.net, gamma_seed);
        table[gi] = {grid.raw[gi], grid.scaled[gi], fit.theta_hat, phi_of(fit.theta_hat), gamma_seed};
    }

    // argmin phi; ties resolved toward the smallest gamma
    int best = 0;
    for (int gi = 1; gi < n_gamma; ++gi) {
        const bool better = table[gi].phi < table[best].phi ||
                            (table[gi].phi == table[best].phi && table[gi].gamma < table[best].gamma);
        if (better) best = gi;
    }

    CdmlResult out;
    out.report.table = table;
    out.report.theta_hat_0 = theta_0;
    out.report.alpha = scales.alpha;
    out.report.beta = scales.beta;
    out.report.gamma_scale = scales.gamma_scale;
    out.report.gamma_hat = table[best].gamma;
    out.report.final_seed = derive_seed(options.seed, "cdml/final");

    LossWeights w_final{scales.alpha, scales.beta, table[best].gamma, scales.gamma_scale};
    JointFitResult final_fit = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune,
                                              w_final, options.net, out.report.final_seed);
    out.report.theta_hat_final = final_fit.theta_hat;
    out.final_pair = std::move(final_fit.pair);
    out.final_resid = std::move(final_fit.resid);
    return out;
}

}  // namespace cdml
