#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cdml/forest.hpp"
#include "cdml/rng.hpp"
#include "cdml/serialize.hpp"

using namespace cdml;

namespace {

Matrix random_matrix(int n, int d, Rng& rng) {
    Matrix X(n, d);
    for (double& v : X.data) v = rng.normal();
    return X;
}

// Brute-force split search over every feature and midpoint, same scoring
// expression as the implementation; used as the oracle on tiny inputs.
struct BruteSplit {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
};

BruteSplit brute_force_split(const Matrix& X, const Vec& y) {
    BruteSplit best;
    const int n = X.rows;
    double total = 0.0;
    for (double v : y) total += v;
    for (int f = 0; f < X.cols; ++f) {
        std::vector<std::pair<double, double>> s;
        for (int i = 0; i < n; ++i) s.emplace_back(X.at(i, f), y[i]);
        std::sort(s.begin(), s.end());
        double left = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            left += s[i].second;
            if (s[i].first == s[i + 1].first) continue;
            const int nl = i + 1, nr = n - nl;
            const double right = total - left;
            const double score = left * left / nl + right * right / nr - total * total / n;
            if (score > best.score) {
                best = {f, s[i].first + 0.5 * (s[i + 1].first - s[i].first), score};
            }
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("forest") {

TEST_CASE("defaults follow the benchmark configuration") {
    ForestConfig cfg;
    CHECK(cfg.n_trees == 20);
    CHECK(cfg.max_depth == 20);
    CHECK(cfg.min_samples_split == 2);
    CHECK(cfg.bootstrap);
}

TEST_CASE("constant targets predict the constant") {
    Rng rng(2);
    const Matrix X = random_matrix(30, 4, rng);
    const Vec y(30, 3.0);
    const Forest f = fit_forest(X, y, ForestConfig{});
    for (double p : predict_forest(f, X)) CHECK(p == 3.0);
}

TEST_CASE("a single depth-1 tree recovers a step function") {
    // y = 1{x0 > 0} with x0 well separated from 0
    Matrix X(8, 2);
    const double xs[8] = {-3.0, -2.5, -2.0, -1.5, 1.5, 2.0, 2.5, 3.0};
    Rng rng(4);
    Vec y(8);
    for (int i = 0; i < 8; ++i) {
        X.at(i, 0) = xs[i];
        X.at(i, 1) = rng.normal() * 0.01;
        y[i] = xs[i] > 0.0 ? 1.0 : 0.0;
    }
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 1;
    cfg.bootstrap = false;
    const Forest f = fit_forest(X, y, cfg);
    REQUIRE(f.trees.size() == 1);
    const Tree& t = f.trees[0];
    REQUIRE(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == 0.0);  // midpoint of -1.5 and 1.5
    CHECK(t.nodes[t.nodes[0].left].value == 0.0);
    CHECK(t.nodes[t.nodes[0].right].value == 1.0);

    const auto oracle = brute_force_split(X, y);
    CHECK(oracle.feature == 0);
    CHECK(oracle.threshold == 0.0);
}

TEST_CASE("root splits match the exhaustive oracle on random tiny problems") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 12 + static_cast<int>(rng.below(9));
        Matrix X = random_matrix(n, 3, rng);
        Vec y(n);
        for (int i = 0; i < n; ++i) y[i] = rng.normal();

        ForestConfig cfg;
        cfg.n_trees = 1;
        cfg.max_depth = 1;
        cfg.bootstrap = false;
        const Forest f = fit_forest(X, y, cfg);
        const auto oracle = brute_force_split(X, y);
        REQUIRE(f.trees[0].nodes[0].feature == oracle.feature);
        CHECK(f.trees[0].nodes[0].threshold == oracle.threshold);
    }
}

TEST_CASE("aggregation averages the trees") {
    Tree t0, t1;
    t0.nodes.push_back({-1, 0.0, -1, -1, 0.0});
    t1.nodes.push_back({-1, 0.0, -1, -1, 4.0});
    Forest f;
    f.n_features = 2;
    f.trees = {t0, t1};
    Matrix X(1, 2);
    CHECK(predict_forest(f, X) == Vec{2.0});

    Forest single;
    single.n_features = 2;
    single.trees = {t1};
    CHECK(predict_forest(single, X) == Vec{4.0});
    CHECK_THROWS_AS(predict_forest(single, Matrix(1, 5)), error);
}

TEST_CASE("fits a smooth target with positive training R2") {
    Rng rng(11);
    const int n = 300;
    const Matrix X = random_matrix(n, 4, rng);
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(X.at(i, 0)) + 0.5 * X.at(i, 1);
    const Forest f = fit_forest(X, y, ForestConfig{});
    const Vec pred = predict_forest(f, X);
    double my = 0.0;
    for (double v : y) my += v;
    my /= n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (int i = 0; i < n; ++i) {
        ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.5);
}

TEST_CASE("predictions stay within the training target range") {
    Rng rng(13);
    const Matrix X = random_matrix(120, 3, rng);
    Vec y(120);
    for (int i = 0; i < 120; ++i) y[i] = rng.normal() * 5.0;
    const Forest f = fit_forest(X, y, ForestConfig{});
    const double lo = *std::min_element(y.begin(), y.end());
    const double hi = *std::max_element(y.begin(), y.end());
    const Matrix Xq = random_matrix(200, 3, rng);
    for (double p : predict_forest(f, Xq)) {
        CHECK(p >= lo);
        CHECK(p <= hi);
    }
}

TEST_CASE("no bootstrap makes every tree identical") {
    Rng rng(17);
    const Matrix X = random_matrix(50, 3, rng);
    Vec y(50);
    for (int i = 0; i < 50; ++i) y[i] = X.at(i, 0) + rng.normal();
    ForestConfig cfg;
    cfg.bootstrap = false;
    cfg.n_trees = 5;
    const Forest f = fit_forest(X, y, cfg);
    const json first = forest_to_json(f)["trees"][0];
    for (int t = 1; t < 5; ++t) CHECK(forest_to_json(f)["trees"][t] == first);
}

TEST_CASE("fitting is deterministic in the seed") {
    Rng rng(23);
    const Matrix X = random_matrix(80, 4, rng);
    Vec y(80);
    for (int i = 0; i < 80; ++i) y[i] = X.at(i, 2) * X.at(i, 3);
    ForestConfig cfg;
    cfg.seed = 99;
    const Forest a = fit_forest(X, y, cfg);
    const Forest b = fit_forest(X, y, cfg);
    CHECK(forest_to_json(a) == forest_to_json(b));

    cfg.seed = 100;
    const Forest c = fit_forest(X, y, cfg);
    CHECK(forest_to_json(a) != forest_to_json(c));
}

TEST_CASE("constant features degrade to a leaf instead of failing") {
    Matrix X(10, 2);
    for (int i = 0; i < 10; ++i) {
        X.at(i, 0) = 1.0;
        X.at(i, 1) = 2.0;
    }
    Vec y(10);
    for (int i = 0; i < 10; ++i) y[i] = i;
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    const Forest f = fit_forest(X, y, cfg);
    CHECK(f.trees[0].nodes.size() == 1);
    CHECK(f.trees[0].nodes[0].value == doctest::Approx(4.5));
}

TEST_CASE("model files round-trip through JSON") {
    Rng rng(29);
    const Matrix X = random_matrix(60, 3, rng);
    Vec y(60);
    for (int i = 0; i < 60; ++i) y[i] = X.at(i, 1);
    const Forest f = fit_forest(X, y, ForestConfig{});
    const Forest back = forest_from_json(forest_to_json(f));
    CHECK(predict_forest(back, X) == predict_forest(f, X));
}

}  // TEST_SUITE
