#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cdml/core.hpp"
#include "cdml/regressor.hpp"

namespace cdml {

struct ForestConfig {
    int n_trees = 20;
    int max_depth = 20;
    int min_samples_split = 2;
    bool bootstrap = true;
    uint64_t seed = 0;
};

/// Binary regression tree stored as flat arrays; leaves carry the mean of the
/// training targets routed to them.
struct Tree {
    struct Node {
        int feature = -1;  // -1 = leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict_row(const double* x) const {
        int id = 0;
        while (nodes[id].feature >= 0)
            id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
        return nodes[id].value;
    }
};

struct Forest {
    ForestConfig cfg;
    int n_features = 0;
    std::vector<Tree> trees;
};

/// Splits maximize variance reduction over all features; thresholds are
/// midpoints between consecutive distinct sorted values; ties prefer the
/// lowest feature index, then the smallest threshold. Trees fit in parallel,
/// each on its own seeded bootstrap resample.
Forest fit_forest(const Matrix& X, const Vec& y, const ForestConfig& cfg);

/// Mean of per-tree predictions.
Vec predict_forest(const Forest& forest, const Matrix& X);

class ForestModel final : public Regressor {
public:
    explicit ForestModel(Forest f) : forest(std::move(f)) {}
    Forest forest;
    Vec predict(const Matrix& X) const override { return predict_forest(forest, X); }
    std::string kind() const override { return "forest"; }
};

}  // namespace cdml
