#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cdml/datagen.hpp"
#include "cdml/rng.hpp"
#include "cdml/serialize.hpp"

using namespace cdml;

namespace {

double column_corr(const Matrix& X, int a, int b) {
    const int n = X.rows;
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) {
        ma += X.at(i, a);
        mb += X.at(i, b);
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = X.at(i, a) - ma, db = X.at(i, b) - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    return sab / std::sqrt(saa * sbb);
}

double column_var(const Matrix& X, int c) {
    double m = 0.0;
    for (int i = 0; i < X.rows; ++i) m += X.at(i, c);
    m /= X.rows;
    double s = 0.0;
    for (int i = 0; i < X.rows; ++i) s += (X.at(i, c) - m) * (X.at(i, c) - m);
    return s / X.rows;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("AR(1) covariates have the prescribed correlation structure") {
    const int n = 100000;
    SUBCASE("independent columns at rho = 0") {
        const Matrix X = sample_ar1(n, 4, 0.0, 1);
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                CHECK(std::fabs(column_corr(X, a, b)) < 4.0 / std::sqrt(static_cast<double>(n)));
    }
    SUBCASE("adjacent and lag-2 correlations at rho = 0.8") {
        const Matrix X = sample_ar1(n, 3, 0.8, 2);
        CHECK(column_corr(X, 0, 1) == doctest::Approx(0.8).epsilon(0.025));
        CHECK(column_corr(X, 0, 2) == doctest::Approx(0.64).epsilon(0.032));
    }
    SUBCASE("marginal variances stay at one") {
        for (double rho : {0.0, 0.5, 0.9}) {
            const Matrix X = sample_ar1(n, 5, rho, 3);
            for (int c = 0; c < 5; ++c) CHECK(std::fabs(column_var(X, c) - 1.0) < 0.02);
        }
    }
    SUBCASE("seeded determinism and parameter validation") {
        CHECK(sample_ar1(10, 3, 0.5, 7).data == sample_ar1(10, 3, 0.5, 7).data);
        CHECK_THROWS_AS(sample_ar1(10, 3, 1.0, 7), error);
    }
}

TEST_CASE("group assignment by the first feature") {
    SUBCASE("minus-infinity threshold marks everyone minority") {
        const Matrix X = sample_ar1(100, 2, 0.0, 1);
        const auto groups = assign_groups(X, -std::numeric_limits<double>::infinity());
        for (uint8_t g : groups) CHECK(g == 1);
    }
    SUBCASE("default threshold yields a 20% minority") {
        const Matrix X = sample_ar1(100000, 2, 0.0, 5);
        const auto groups = assign_groups(X, 0.8416);
        double frac = 0.0;
        for (uint8_t g : groups) frac += g;
        frac /= groups.size();
        CHECK(frac == doctest::Approx(0.20).epsilon(0.05));
        CHECK(std::fabs(frac - 0.20) < 0.01);
    }
    SUBCASE("the boundary point is majority (strict inequality)") {
        Matrix X(1, 1);
        X.at(0, 0) = 0.8416;
        CHECK(assign_groups(X, 0.8416)[0] == 0);
        X.at(0, 0) = 0.8417;
        CHECK(assign_groups(X, 0.8416)[0] == 1);
    }
}

TEST_CASE("nuisance formulas evaluate exactly") {
    Matrix X(2, 10);  // row 0 majority (x0 = 0), row 1 minority (x0 = 2)
    X.at(1, 0) = 2.0;
    const auto groups = assign_groups(X, 0.8416);
    REQUIRE(groups[0] == 0);
    REQUIRE(groups[1] == 1);

    SUBCASE("grouped linear treatment model") {
        Matrix Xs = X;
        for (int i = 0; i < 2; ++i) {
            Xs.at(i, 1) = 1.0;
            Xs.at(i, 3) = 1.0;
            Xs.at(i, 6) = 1.0;
        }
        const Vec m = nuisance_eval(NuisanceId::linear_groups, NuisanceFn::m, Xs, groups);
        CHECK(m[0] == 16.0);  // 1 + 10 + 5
        CHECK(m[1] == 16.0);  // 10 + 1 + 5

        Matrix Xd = X;
        Xd.at(0, 1) = 1.0;
        Xd.at(1, 1) = 1.0;
        const Vec md = nuisance_eval(NuisanceId::linear_groups, NuisanceFn::m, Xd, groups);
        CHECK(md[0] == 1.0);
        CHECK(md[1] == 10.0);
    }
    SUBCASE("grouped linear outcome model uses the shifted feature set") {
        Matrix Xs = X;
        Xs.at(0, 2) = 1.0;
        Xs.at(0, 5) = 1.0;
        const Vec g = nuisance_eval(NuisanceId::linear_groups, NuisanceFn::g, Xs, groups);
        CHECK(g[0] == 15.0);  // 0 + 10*1 + 5*1
    }
    SUBCASE("rectified/exponential pair") {
        Matrix Z(1, 10);
        const std::vector<uint8_t> maj{0};
        CHECK(nuisance_eval(NuisanceId::relu_exp, NuisanceFn::g, Z, maj)[0] == 0.5);  // 0 + 0 + e^0/2

        Z.at(0, 1) = 2.0;  // majority m: relu(0.5*4 + 0 + 0) = 2
        CHECK(nuisance_eval(NuisanceId::relu_exp, NuisanceFn::m, Z, maj)[0] == 2.0);
        Z.at(0, 3) = -2.0;  // relu(2 - 8) = 0
        CHECK(nuisance_eval(NuisanceId::relu_exp, NuisanceFn::m, Z, maj)[0] == 0.0);
    }
    SUBCASE("too few features is an error") {
        const Matrix small(3, 9);
        CHECK_THROWS_WITH_AS(nuisance_eval(NuisanceId::linear_groups, NuisanceFn::m, small,
                                           std::vector<uint8_t>(3, 0)),
                             doctest::Contains("d >= 10"), error);
    }
}

TEST_CASE("partially linear sampling") {
    SUBCASE("defaults mirror the reference configuration") {
        const DgpConfig cfg;
        CHECK(cfg.sigma_u == 1.0);
        CHECK(cfg.sigma_v == 1.0);
        CHECK(cfg.theta == 1.0);
        CHECK(cfg.n == 2000);
        CHECK(cfg.d == 10);
    }
    SUBCASE("noiseless homogeneous data satisfy the structural identity exactly") {
        DgpConfig cfg;
        cfg.n = 200;
        cfg.sigma_u = 0.0;
        cfg.sigma_v = 0.0;
        cfg.seed = 9;
        const Dataset data = sample_plr(cfg);
        const Vec g = oracle_g(cfg, data.X);
        const Vec m = oracle_m(cfg, data.X);
        for (int i = 0; i < cfg.n; ++i) {
            // same evaluation order as the sampler, so the match is exact
            CHECK(data.Y[i] == g[i] + data.D[i] * cfg.theta);
            CHECK(data.D[i] == m[i]);
        }
    }
    SUBCASE("oracle residuals behave like pure noise") {
        DgpConfig cfg;
        cfg.n = 20000;
        cfg.seed = 4;
        const Dataset data = sample_plr(cfg);
        const Vec l = oracle_l(cfg, data.X);
        double mean = 0.0;
        for (int i = 0; i < cfg.n; ++i) mean += data.Y[i] - l[i];
        mean /= cfg.n;
        const double sd = std::sqrt(cfg.theta * cfg.theta * cfg.sigma_v * cfg.sigma_v +
                                    cfg.sigma_u * cfg.sigma_u);
        CHECK(std::fabs(mean) < 4.0 * sd / std::sqrt(static_cast<double>(cfg.n)));
    }
    SUBCASE("heterogeneous effects have the prescribed mean and unit variance") {
        DgpConfig cfg;
        cfg.n = 100000;
        cfg.theta = 10.0;
        cfg.heterogeneous = true;
        cfg.seed = 6;
        const Dataset data = sample_plr(cfg);
        REQUIRE(data.truth.has_value());
        REQUIRE(data.truth->theta_i.has_value());
        const Vec& te = *data.truth->theta_i;
        double mean = 0.0;
        for (double t : te) mean += t;
        mean /= te.size();
        double var = 0.0;
        for (double t : te) var += (t - mean) * (t - mean);
        var /= te.size();
        CHECK(std::fabs(mean - 10.0) < 0.02);
        CHECK(std::fabs(var - 1.0) < 0.05);
    }
    SUBCASE("sampling is seed-deterministic") {
        DgpConfig cfg;
        cfg.n = 50;
        cfg.seed = 3;
        const Dataset a = sample_plr(cfg);
        const Dataset b = sample_plr(cfg);
        CHECK(a.X.data == b.X.data);
        CHECK(a.D == b.D);
        CHECK(a.Y == b.Y);
    }
}

TEST_CASE("semi-synthetic construction") {
    // raw table: outcome depends on two covariates; treatment is its own column
    const int n = 400;
    RawTable raw;
    raw.columns = {"age", "income", "eligible", "assets"};
    raw.values = Matrix(n, 4);
    Rng rng(12);
    for (int i = 0; i < n; ++i) {
        const double age = rng.normal(40, 10);
        const double income = rng.normal(50, 15);
        const double eligible = rng.uniform() < 0.4 ? 1.0 : 0.0;
        raw.values.at(i, 0) = age;
        raw.values.at(i, 1) = income;
        raw.values.at(i, 2) = eligible;
        raw.values.at(i, 3) = 2.0 * age + 0.5 * income + rng.normal();
    }

    SemiSynthConfig cfg;
    cfg.outcome_col = "assets";
    cfg.treatment_col = "eligible";
    cfg.seed = 44;

    SUBCASE("zero effect, zero noise reproduces the surrogate exactly") {
        SemiSynthConfig c0 = cfg;
        c0.theta = 0.0;
        c0.sigma_u = 0.0;
        const Dataset data = build_semisynthetic(raw, c0);
        REQUIRE(data.truth.has_value());
        REQUIRE(data.truth->g_surrogate != nullptr);
        const Vec g_rf = data.truth->g_surrogate->predict(data.X);
        for (int i = 0; i < data.n(); ++i) CHECK(data.Y[i] == g_rf[i]);
        CHECK(data.d() == 2);  // outcome and treatment columns removed
    }
    SUBCASE("homogeneous effect enters linearly") {
        SemiSynthConfig c10 = cfg;
        c10.theta = 10.0;
        const Dataset data = build_semisynthetic(raw, c10);
        const Vec g_rf = data.truth->g_surrogate->predict(data.X);
        double mean = 0.0;
        for (int i = 0; i < data.n(); ++i) mean += data.Y[i] - g_rf[i] - 10.0 * data.D[i];
        mean /= data.n();
        CHECK(std::fabs(mean) < 4.0 * c10.sigma_u / std::sqrt(static_cast<double>(data.n())));
    }
    SUBCASE("missing columns are named in the error") {
        SemiSynthConfig bad = cfg;
        bad.treatment_col = "nope";
        CHECK_THROWS_WITH_AS(build_semisynthetic(raw, bad), doctest::Contains("nope"), error);
    }
}

TEST_CASE("CSV ingestion") {
    const std::string path = "test_fixture.csv";
    SUBCASE("three-row fixture round-trips exactly") {
        {
            std::ofstream out(path);
            out << "a,b,c\n1.5,2,3\n-0.25,0.125,0\n10,20,30\n";
        }
        const RawTable t = load_csv(path, {"a", "c"});
        CHECK(t.columns == std::vector<std::string>{"a", "b", "c"});
        CHECK(t.values.rows == 3);
        CHECK(t.values.at(0, 0) == 1.5);
        CHECK(t.values.at(1, 1) == 0.125);
        CHECK(t.values.at(2, 2) == 30.0);
        std::remove(path.c_str());
    }
    SUBCASE("missing required column is a named error") {
        {
            std::ofstream out(path);
            out << "a,b\n1,2\n";
        }
        CHECK_THROWS_WITH_AS(load_csv(path, {"treatment"}), doctest::Contains("treatment"), error);
        std::remove(path.c_str());
    }
    SUBCASE("parse errors carry line numbers") {
        {
            std::ofstream out(path);
            out << "a,b\n1,2\n3,oops\n";
        }
        CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains(":3"), error);
        std::remove(path.c_str());
    }
    SUBCASE("non-finite values are rejected") {
        {
            std::ofstream out(path);
            out << "a\ninf\n";
        }
        CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("non-finite"), error);
        std::remove(path.c_str());
    }
    SUBCASE("a large generated dataset loads with the right row count") {
        DgpConfig cfg;
        cfg.n = 100000;
        cfg.seed = 5;
        const Dataset data = sample_plr(cfg);
        write_dataset_csv(data, path);
        const Dataset back = read_dataset_csv(path);
        CHECK(back.n() == cfg.n);
        CHECK(back.d() == cfg.d);
        CHECK(back.X.data == data.X.data);  // %.17g round-trips doubles exactly
        CHECK(back.Y == data.Y);
        std::remove(path.c_str());
    }
}

TEST_CASE("dataset export embeds the truth sidecar") {
    DgpConfig cfg;
    cfg.n = 30;
    cfg.seed = 8;
    cfg.theta = 2.5;
    const Dataset data = sample_plr(cfg);
    write_dataset_csv(data, "ds.csv");
    write_truth_sidecar(data, "ds.truth.json");
    const Dataset back = read_dataset_csv("ds.csv", "ds.truth.json");
    REQUIRE(back.truth.has_value());
    CHECK(back.truth->theta == 2.5);
    CHECK(back.truth->var_V == 1.0);
    REQUIRE(back.truth->dgp.has_value());
    CHECK(back.truth->dgp->seed == 8);
    std::remove("ds.csv");
    std::remove("ds.truth.json");
}

}  // TEST_SUITE
