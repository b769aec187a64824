#include "cdml/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdml/kernels.hpp"
#include "cdml/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdml {

namespace {

struct TreeBuilder {
    const Matrix& X;
    const Vec& y;
    const ForestConfig& cfg;
    Tree tree;
    std::vector<int> samples;           // partitioned in place during growth
    std::vector<std::pair<double, double>> sorted;  // (feature value, target) scratch

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = -1.0;  // variance reduction * node count, > 0 when valid
    };

    // Best split by exhaustive scan: for each feature, sort the node's
    // samples and evaluate every midpoint between distinct values. First
    // strictly-better candidate wins, so ascending iteration implements the
    // lowest-feature/smallest-threshold tie rule.
    Split find_split(int lo, int hi) {
        Split best;
        best.score = 0.0;
        const int count = hi - lo;
        double total = 0.0;
        for (int i = lo; i < hi; ++i) total += y[samples[i]];

        for (int f = 0; f < X.cols; ++f) {
            sorted.clear();
            for (int i = lo; i < hi; ++i) sorted.emplace_back(X.at(samples[i], f), y[samples[i]]);
            std::sort(sorted.begin(), sorted.end());
            double left_sum = 0.0;
            for (int i = 0; i + 1 < count; ++i) {
                left_sum += sorted[i].second;
                if (sorted[i].first == sorted[i + 1].first) continue;
                const int nl = i + 1;
                const int nr = count - nl;
                const double right_sum = total - left_sum;
                // maximizing sum of child mean-squared masses minimizes SSE
                const double score =
                    left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / count;
                if (score > best.score) {
                    best.feature = f;
                    best.threshold = sorted[i].first + 0.5 * (sorted[i + 1].first - sorted[i].first);
                    best.score = score;
                }
            }
        }
        return best;
    }

    int build(int lo, int hi, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int count = hi - lo;
        double sum = 0.0;
        for (int i = lo; i < hi; ++i) sum += y[samples[i]];
        tree.nodes[id].value = sum / count;

        if (depth >= cfg.max_depth || count < cfg.min_samples_split) return id;
        bool pure = true;
        for (int i = lo + 1; i < hi && pure; ++i) pure = y[samples[i]] == y[samples[lo]];
        if (pure) return id;
        const Split split = find_split(lo, hi);
        if (split.feature < 0) return id;  // constant features

        auto mid_it = std::stable_partition(samples.begin() + lo, samples.begin() + hi,
                                            [&](int s) { return X.at(s, split.feature) <= split.threshold; });
        const int mid = static_cast<int>(mid_it - samples.begin());
        if (mid == lo || mid == hi) return id;

        tree.nodes[id].feature = split.feature;
        tree.nodes[id].threshold = split.threshold;
        const int left = build(lo, mid, depth + 1);
        tree.nodes[id].left = left;
        const int right = build(mid, hi, depth + 1);
        tree.nodes[id].right = right;
        return id;
    }
};

Tree fit_tree(const Matrix& X, const Vec& y, const ForestConfig& cfg, uint64_t tree_seed) {
    TreeBuilder b{X, y, cfg, {}, {}, {}};
    const int n = X.rows;
    if (cfg.bootstrap) {
        Rng rng(tree_seed);
        b.samples.resize(n);
        for (int i = 0; i < n; ++i) b.samples[i] = static_cast<int>(rng.below(n));
    } else {
        b.samples.resize(n);
        std::iota(b.samples.begin(), b.samples.end(), 0);
    }
    b.build(0, n, 0);
    return std::move(b.tree);
}

}  // namespace

Forest fit_forest(const Matrix& X, const Vec& y, const ForestConfig& cfg) {
    require(X.rows >= 2, "fit_forest: need at least 2 samples");
    require(static_cast<size_t>(X.rows) == y.size(), "fit_forest: X/y row mismatch");
    require(cfg.n_trees >= 1 && cfg.max_depth >= 1, "fit_forest: n_trees and max_depth must be >= 1");

    Forest forest;
    forest.cfg = cfg;
    forest.n_features = X.cols;
    forest.trees.resize(cfg.n_trees);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled() && !omp_in_parallel())
#endif
    for (int t = 0; t < cfg.n_trees; ++t)
        forest.trees[t] = fit_tree(X, y, cfg, derive_seed(cfg.seed, "forest/tree", t));
    return forest;
}

Vec predict_forest(const Forest& forest, const Matrix& X) {
    require(X.cols == forest.n_features, "predict_forest: expected " + std::to_string(forest.n_features) +
                                             " features, got " + std::to_string(X.cols));
    Vec out(X.rows, 0.0);
    const double inv = 1.0 / forest.trees.size();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled() && X.rows >= 256 && !omp_in_parallel())
#endif
    for (int i = 0; i < X.rows; ++i) {
        double s = 0.0;
        for (const Tree& t : forest.trees) s += t.predict_row(X.row(i));
        out[i] = s * inv;
    }
    return out;
}

}  // namespace cdml
