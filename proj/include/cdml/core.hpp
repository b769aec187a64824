#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdml {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }

    /// Rows selected by index, in the order given.
    Matrix take(const std::vector<int>& idx) const {
        Matrix out(static_cast<int>(idx.size()), cols);
        for (size_t k = 0; k < idx.size(); ++k)
            for (int j = 0; j < cols; ++j) out.at(static_cast<int>(k), j) = at(idx[k], j);
        return out;
    }
};

inline Vec take(const Vec& v, const std::vector<int>& idx) {
    Vec out(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
    return out;
}

struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

}  // namespace cdml
