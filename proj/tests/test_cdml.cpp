#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cdml/cdml.hpp"
#include "cdml/rng.hpp"

using namespace cdml;

namespace {

// small, mostly-linear synthetic problem the three-layer nets can fit fast
DgpConfig easy_dgp(uint64_t seed, int n = 240) {
    DgpConfig cfg;
    cfg.n = n;
    cfg.d = 10;
    cfg.rho = 0.5;
    cfg.theta = 1.0;
    cfg.seed = seed;
    return cfg;
}

TrainConfig short_training() {
    TrainConfig tc;
    tc.max_epochs = 250;
    tc.patience = 30;
    return tc;
}

}  // namespace

TEST_SUITE("cdml") {

TEST_CASE("joint loss arithmetic") {
    CHECK(joint_loss({1, 1}, {2, 2}, {1, 1, 0, 1}) == 5.0);
    CHECK(joint_loss({1, -1}, {1, 1}, {0, 0, 1, 1}) == 0.0);
    CHECK(joint_loss({1, 2}, {0, 1}, {2, 3, 4, 1}) == doctest::Approx(10.5).epsilon(1e-15));
    CHECK_THROWS_AS(joint_loss({}, {}, {}), error);
    CHECK_THROWS_AS(joint_loss({1.0}, {1.0, 2.0}, {}), error);
}

TEST_CASE("joint loss properties") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const size_t n = 1 + rng.below(50);
        Vec v(n), u(n);
        for (double& x : v) x = rng.normal();
        for (double& x : u) x = rng.normal();
        LossWeights w{0.5 + rng.uniform(), 0.5 + rng.uniform(), rng.uniform() * 3.0, 1.0};

        const double base = joint_loss(v, u, w);
        CHECK(base >= 0.0);

        // nondecreasing in gamma for fixed residuals
        LossWeights w2 = w;
        w2.gamma = w.gamma + 0.7;
        CHECK(joint_loss(v, u, w2) >= base);

        // homogeneity: scaling both residual vectors by c scales the loss by c^2
        const double c = 1.0 + rng.uniform() * 2.0;
        Vec vc = v, uc = u;
        for (double& x : vc) x *= c;
        for (double& x : uc) x *= c;
        CHECK(joint_loss(vc, uc, w) == doctest::Approx(c * c * base).epsilon(1e-12));
    }

    SUBCASE("zero exactly when all residual terms vanish") {
        LossWeights w{1.0, 2.0, 3.0, 1.0};
        CHECK(joint_loss({0, 0}, {0, 0}, w) == 0.0);
        CHECK(joint_loss({0.1, 0}, {0, 0}, w) > 0.0);
        CHECK(joint_loss({0, 0}, {0, 0.1}, w) > 0.0);
    }
}

TEST_CASE("scale derivation from pilot residuals") {
    ResidualSet pilot;
    pilot.treatment = {1.0, 1.0};
    pilot.outcome = {2.0, 2.0};
    const Scales s = compute_scales(pilot);
    CHECK(s.alpha == 1.0);
    CHECK(s.beta == 0.25);
    CHECK(s.gamma_scale == 0.5);

    SUBCASE("unit-variance uncorrelated residuals give near-unit scales") {
        Rng rng(13);
        ResidualSet big;
        big.treatment.resize(200000);
        big.outcome.resize(200000);
        for (double& x : big.treatment) x = rng.normal();
        for (double& x : big.outcome) x = rng.normal();
        const Scales sb = compute_scales(big);
        CHECK(sb.alpha == doctest::Approx(1.0).epsilon(0.02));
        CHECK(sb.beta == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("exactly orthogonal residuals cannot be scaled") {
        ResidualSet ortho;
        ortho.treatment = {1.0, -1.0};
        ortho.outcome = {1.0, 1.0};
        CHECK_THROWS_WITH_AS(compute_scales(ortho), doctest::Contains("degenerate"), error);
    }
}

TEST_CASE("gamma grid") {
    const GammaGrid g = make_gamma_grid({0.0, 0.5, 0.1}, 2.0);
    CHECK(g.scaled == Vec{0.0, 1.0, 0.2});  // order preserved
    CHECK_THROWS_WITH_AS(make_gamma_grid({0.1, 1.0}, 1.0), doctest::Contains("contain 0"), error);
    CHECK_THROWS_AS(make_gamma_grid({}, 1.0), error);
    CHECK_THROWS_AS(make_gamma_grid({0.0, -1.0}, 1.0), error);
    CHECK(default_gamma_grid().front() == 0.0);
    CHECK(default_gamma_grid().size() == 7);
}

TEST_CASE("holdout selection error is plain mean squared error") {
    // four rows, hand-checked: residuals (1, -1, 2, 0) -> mean of squares 1.5
    const Vec y{5.0, 2.0, 7.0, 1.0};
    const Vec d{1.0, 1.0, 0.0, 1.0};
    const Vec g0{2.0, 1.0, 5.0, -1.0};
    const double theta = 2.0;
    CHECK(holdout_phi(y, d, g0, theta) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK_THROWS_AS(holdout_phi({}, {}, {}, 1.0), error);
}

TEST_CASE("joint fits are seed-deterministic and respect the split guard") {
    const Dataset data = sample_plr(easy_dgp(3));
    const SplitIndices splits = split_indices(data.n(), {0.5, 0.25, 0.25}, 1);
    CdmlNetConfig net;
    net.train = short_training();
    const LossWeights w{1.0, 1.0, 0.0, 1.0};

    const JointFitResult a = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune, w, net, 12);
    const JointFitResult b = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune, w, net, 12);
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(a.best_epoch == b.best_epoch);

    CHECK_THROWS_WITH_AS(run_cdml_fixed(data, splits.train, splits.train, splits.tune, w, net, 12),
                         doctest::Contains("overlap"), error);
    CHECK_THROWS_AS(
        run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune, {0.0, 1.0, 0.0, 1.0}, net, 12),
        error);
}

TEST_CASE("a noiseless linear problem is estimated accurately") {
    // linear nuisances, tiny outcome noise: a capacity-matched joint fit
    // should land near the true effect
    Dataset data;
    const int n = 400;
    data.X = sample_ar1(n, 10, 0.3, 17);
    data.D.resize(n);
    data.Y.resize(n);
    Rng rng(18);
    const double theta = 1.5;
    for (int i = 0; i < n; ++i) {
        const double* x = data.X.row(i);
        const double m = 0.8 * x[1] - 0.5 * x[3];
        const double g = 0.6 * x[0] + 0.4 * x[2];
        data.D[i] = m + rng.normal();
        data.Y[i] = g + theta * data.D[i] + 0.05 * rng.normal();
    }
    const SplitIndices splits = split_indices(n, {0.5, 0.25, 0.25}, 2);
    CdmlNetConfig net;
    net.train.max_epochs = 2000;
    net.train.patience = 200;
    net.custom_widths = std::vector<int>{1};  // capacity matched to the linear truth
    const JointFitResult fit =
        run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune, {1, 1, 0, 1}, net, 4);
    CHECK(std::fabs(fit.theta_hat - theta) < 0.05);
}

TEST_CASE("tuning selects the exact argmin of the recorded table") {
    const Dataset data = sample_plr(easy_dgp(21));
    const SplitIndices splits = split_indices(data.n(), {0.5, 0.25, 0.25}, 5);
    CdmlOptions opt;
    opt.net.train = short_training();
    opt.seed = 31;
    opt.raw_grid = {0.0, 0.1, 1.0};
    const CdmlResult res = tune_and_run(data, splits, opt);

    REQUIRE(res.report.table.size() == 3);
    double best_phi = res.report.table[0].phi;
    double best_gamma = res.report.table[0].gamma;
    for (const auto& row : res.report.table) {
        CHECK(std::isfinite(row.phi));
        if (row.phi < best_phi || (row.phi == best_phi && row.gamma < best_gamma)) {
            best_phi = row.phi;
            best_gamma = row.gamma;
        }
    }
    CHECK(res.report.gamma_hat == best_gamma);

    SUBCASE("gamma_hat belongs to the scaled grid") {
        bool found = false;
        for (const auto& row : res.report.table) found = found || row.gamma == res.report.gamma_hat;
        CHECK(found);
    }
    SUBCASE("per-gamma rows record their seed derivation") {
        for (size_t k = 0; k < res.report.table.size(); ++k)
            CHECK(res.report.table[k].seed == derive_seed(opt.seed, "cdml/gamma", k));
        CHECK(res.report.final_seed == derive_seed(opt.seed, "cdml/final"));
    }
}

TEST_CASE("a singleton zero grid reduces to the fixed gamma-zero path") {
    const Dataset data = sample_plr(easy_dgp(33));
    const SplitIndices splits = split_indices(data.n(), {0.5, 0.25, 0.25}, 8);
    CdmlOptions opt;
    opt.net.train = short_training();
    opt.seed = 77;
    opt.raw_grid = {0.0};
    const CdmlResult res = tune_and_run(data, splits, opt);
    CHECK(res.report.gamma_hat == 0.0);

    const LossWeights w{res.report.alpha, res.report.beta, 0.0, res.report.gamma_scale};
    const JointFitResult direct = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune, w,
                                                 opt.net, res.report.final_seed);
    CHECK(std::fabs(res.report.theta_hat_final - direct.theta_hat) <= 1e-9);
    CHECK(res.report.theta_hat_final == direct.theta_hat);  // exact reproduction
}

TEST_CASE("grid parallelism does not change any reported number") {
    const Dataset data = sample_plr(easy_dgp(55, 160));
    const SplitIndices splits = split_indices(data.n(), {0.5, 0.25, 0.25}, 9);
    CdmlOptions opt;
    opt.net.train = short_training();
    opt.net.train.max_epochs = 120;
    opt.seed = 3;
    opt.raw_grid = {0.0, 0.5, 5.0};
    CdmlOptions serial = opt;
    serial.parallel_grid = false;
    const CdmlResult a = tune_and_run(data, splits, opt);
    const CdmlResult b = tune_and_run(data, splits, serial);
    CHECK(a.report.theta_hat_final == b.report.theta_hat_final);
    CHECK(a.report.gamma_hat == b.report.gamma_hat);
    for (size_t k = 0; k < a.report.table.size(); ++k) {
        CHECK(a.report.table[k].theta_hat_1 == b.report.table[k].theta_hat_1);
        CHECK(a.report.table[k].phi == b.report.table[k].phi);
    }
}

TEST_CASE("the penalty shrinks the training residual covariance on average") {
    // averaged over seeds, larger gamma should not increase |mean(V*U)| on
    // the training batch at convergence
    const Vec raw_grid{0.0, 1.0, 10.0};
    Vec avg_abs_cov(raw_grid.size(), 0.0);
    const int n_seeds = 10;
    for (int s = 0; s < n_seeds; ++s) {
        const Dataset data = sample_plr(easy_dgp(1000 + s));
        const SplitIndices splits = split_indices(data.n(), {0.5, 0.25, 0.25}, 50 + s);
        DmlLearnerConfig pilot_cfg;
        pilot_cfg.seed = derive_seed(9000, "pilot", s);
        pilot_cfg.train = short_training();
        const DmlResult pilot = run_dml(data, DmlPlan{splits.train, splits.tune, splits.tune}, pilot_cfg);
        const Scales scales = compute_scales(pilot.resid);

        CdmlNetConfig net;
        net.train = short_training();
        for (size_t k = 0; k < raw_grid.size(); ++k) {
            const LossWeights w{scales.alpha, scales.beta, raw_grid[k] * scales.gamma_scale,
                                scales.gamma_scale};
            const JointFitResult fit =
                run_cdml_fixed(data, splits.train, splits.tune, splits.tune, w, net, 400 + s);
            // training-set residual covariance at the selected checkpoint
            const ResidualSet train_res = [&] {
                NuisancePair p = fit.pair;
                p.fit_idx.clear();  // evaluate on the training rows deliberately
                return residuals(data, splits.train, p);
            }();
            Vec prod(train_res.treatment.size());
            for (size_t i = 0; i < prod.size(); ++i)
                prod[i] = train_res.treatment[i] * train_res.outcome[i];
            double mean = 0.0;
            for (double v : prod) mean += v;
            avg_abs_cov[k] += std::fabs(mean / prod.size()) / n_seeds;
        }
    }
    CHECK(avg_abs_cov.back() < avg_abs_cov.front());
    const double range = avg_abs_cov.front() - avg_abs_cov.back();
    for (size_t k = 0; k + 1 < avg_abs_cov.size(); ++k)
        CHECK(avg_abs_cov[k + 1] <= avg_abs_cov[k] + 0.1 * range);
}

}  // TEST_SUITE
