#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cdml/core.hpp"

namespace cdml {

/// A fitted regression model: X -> predictions, one per row.
struct Regressor {
    virtual ~Regressor() = default;
    virtual Vec predict(const Matrix& X) const = 0;
    virtual std::string kind() const = 0;
};

/// The two fitted nuisance regressors of a DML run. `fit_idx` records which
/// rows the pair was trained on so that downstream residual evaluation can
/// reject fit/evaluate overlap; empty means unknown (no check possible).
struct NuisancePair {
    std::shared_ptr<const Regressor> m_hat;
    std::shared_ptr<const Regressor> l_hat;
    std::vector<int> fit_idx;
};

}  // namespace cdml
