#include "cdml/dml.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdml/kernels.hpp"
#include "cdml/rng.hpp"

namespace cdml {

namespace k = kernels;

std::vector<int> SplitIndices::estimation() const {
    std::vector<int> out = tune;
    out.insert(out.end(), val.begin(), val.end());
    return out;
}

SplitIndices split_indices(int n, std::array<double, 3> fractions, uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        require(f > 0.0, "split_indices: fractions must be positive");
        total += f;
    }
    require(std::abs(total - 1.0) < 1e-9, "split_indices: fractions must sum to 1");

    // largest-remainder rounding of the part sizes
    std::array<int, 3> sizes{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int p = 0; p < 3; ++p) {
        const double exact = fractions[p] * n;
        sizes[p] = static_cast<int>(std::floor(exact));
        remainder[p] = exact - sizes[p];
        assigned += sizes[p];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int extra = 0; extra < n - assigned; ++extra) ++sizes[order[extra % 3]];
    for (int p = 0; p < 3; ++p)
        require(sizes[p] > 0, "split_indices: part " + std::to_string(p) + " is empty for n = " + std::to_string(n));

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(perm);

    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + sizes[0]);
    s.tune.assign(perm.begin() + sizes[0], perm.begin() + sizes[0] + sizes[1]);
    s.val.assign(perm.begin() + sizes[0] + sizes[1], perm.end());
    return s;
}

ResidualSet residuals(const Dataset& data, const std::vector<int>& idx, const NuisancePair& pair) {
    require(pair.m_hat && pair.l_hat, "residuals: nuisance pair is not fitted");
    for (int i : idx)
        require(i >= 0 && i < data.n(), "residuals: index " + std::to_string(i) + " out of range");
    if (!pair.fit_idx.empty()) {
        std::vector<int> fit_sorted = pair.fit_idx;
        std::sort(fit_sorted.begin(), fit_sorted.end());
        for (int i : idx)
            if (std::binary_search(fit_sorted.begin(), fit_sorted.end(), i))
                fail("residuals: evaluation row " + std::to_string(i) +
                     " was used to fit the nuisance pair; fit and evaluation sets must be disjoint");
    }

    const Matrix Xe = data.X.take(idx);
    const Vec m_pred = pair.m_hat->predict(Xe);
    const Vec l_pred = pair.l_hat->predict(Xe);

    ResidualSet res;
    res.idx = idx;
    res.treatment.resize(idx.size());
    res.outcome.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        res.treatment[i] = data.D[idx[i]] - m_pred[i];
        res.outcome[i] = data.Y[idx[i]] - l_pred[i];
        require(std::isfinite(res.treatment[i]) && std::isfinite(res.outcome[i]),
                "residuals: non-finite residual at row " + std::to_string(idx[i]));
    }
    return res;
}

double estimate_theta(const ResidualSet& res) {
    require(!res.treatment.empty(), "estimate_theta: empty residual set");
    require(res.treatment.size() == res.outcome.size(), "estimate_theta: residual length mismatch");
    Vec buf(res.treatment.size());
    k::vmul(res.treatment.data(), res.treatment.data(), buf.data(), buf.size());
    const double sum_v_sq = k::sum(buf);
    require(sum_v_sq > 0.0, "estimate_theta: treatment residuals are all zero (degenerate treatment)");
    k::vmul(res.treatment.data(), res.outcome.data(), buf.data(), buf.size());
    return k::sum(buf) / sum_v_sq;
}

EstimateReport summarize_estimate(const ResidualSet& res, const std::string& learner) {
    EstimateReport rep;
    rep.theta_hat = estimate_theta(res);
    rep.n_estimation = static_cast<int>(res.idx.size());
    Vec buf(res.treatment.size());
    k::vmul(res.treatment.data(), res.treatment.data(), buf.data(), buf.size());
    rep.sum_vhat_sq = k::sum(buf);
    rep.mean_treatment_resid = k::mean(res.treatment);
    rep.mean_outcome_resid = k::mean(res.outcome);
    auto var = [&](const Vec& v, double mean) {
        double s = 0.0;
        for (double x : v) s += (x - mean) * (x - mean);
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    rep.var_treatment_resid = var(res.treatment, rep.mean_treatment_resid);
    rep.var_outcome_resid = var(res.outcome, rep.mean_outcome_resid);
    rep.learner = learner;
    return rep;
}

DmlResult run_dml(const Dataset& data, const DmlPlan& plan, const DmlLearnerConfig& cfg) {
    require(!plan.train_idx.empty() && !plan.eval_idx.empty(), "run_dml: train and eval sets must be non-empty");

    NuisancePair pair;
    pair.fit_idx = plan.train_idx;
    std::string learner;

    const Matrix Xt = data.X.take(plan.train_idx);
    const Vec Dt = take(data.D, plan.train_idx);
    const Vec Yt = take(data.Y, plan.train_idx);

    switch (cfg.kind) {
        case LearnerKind::mlp: {
            require(!plan.stop_idx.empty(), "run_dml: MLP learners need a hold-out set for early stopping");
            const Matrix Xh = data.X.take(plan.stop_idx);
            const Vec Dh = take(data.D, plan.stop_idx);
            const Vec Yh = take(data.Y, plan.stop_idx);
            const MlpSpec spec = make_mlp_spec(data.d(), cfg.variant, cfg.five_layer_keep_prob);
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(cfg.seed, "dml/m");
            auto m_fit = std::make_shared<FittedMlp>(fit_mlp(Xt, Dt, Xh, Dh, spec, tc));
            tc.seed = derive_seed(cfg.seed, "dml/l");
            auto l_fit = std::make_shared<FittedMlp>(fit_mlp(Xt, Yt, Xh, Yh, spec, tc));
            pair.m_hat = std::move(m_fit);
            pair.l_hat = std::move(l_fit);
            learner = cfg.variant == MlpVariant::three_layer ? "mlp3" : "mlp5";
            break;
        }
        case LearnerKind::forest: {
            ForestConfig fc = cfg.forest;
            fc.seed = derive_seed(cfg.seed, "dml/forest-m");
            pair.m_hat = std::make_shared<ForestModel>(fit_forest(Xt, Dt, fc));
            fc.seed = derive_seed(cfg.seed, "dml/forest-l");
            pair.l_hat = std::make_shared<ForestModel>(fit_forest(Xt, Yt, fc));
            learner = "forest";
            break;
        }
        case LearnerKind::oracle: {
            require(data.truth && data.truth->dgp,
                    "run_dml: oracle learners need synthetic data with a recorded DGP");
            pair = oracle_pair(*data.truth->dgp);
            pair.fit_idx.clear();  // oracle functions never saw any rows
            learner = "oracle";
            break;
        }
    }

    DmlResult out;
    out.resid = residuals(data, plan.eval_idx, pair);
    out.report = summarize_estimate(out.resid, learner);
    out.pair = std::move(pair);
    return out;
}

DmlResult run_dml(const Dataset& data, const SplitIndices& splits, const DmlLearnerConfig& cfg) {
    DmlPlan plan;
    plan.train_idx = splits.train;
    plan.stop_idx = splits.tune;
    plan.eval_idx = splits.estimation();
    return run_dml(data, plan, cfg);
}

}  // namespace cdml
