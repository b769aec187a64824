#include "cdml/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdml::kernels {

namespace {

std::atomic<bool> g_parallel{true};

constexpr size_t kSumBlock = 2048;
constexpr int kParRows = 64;        // minimum rows before a matmul goes parallel
constexpr size_t kParElems = 8192;  // minimum elements before an elementwise op goes parallel

bool go_parallel(size_t work) {
#ifdef _OPENMP
    return g_parallel.load(std::memory_order_relaxed) && work >= kParElems && omp_get_max_threads() > 1 &&
           !omp_in_parallel();
#else
    (void)work;
    return false;
#endif
}

bool go_parallel_rows(int rows) {
#ifdef _OPENMP
    return g_parallel.load(std::memory_order_relaxed) && rows >= kParRows && omp_get_max_threads() > 1 &&
           !omp_in_parallel();
#else
    (void)rows;
    return false;
#endif
}

// Shared accumulation helpers. Both the serial and the OpenMP outer loops call
// these, so the floating-point evaluation order per output element is fixed.
inline double block_sum_raw(const double* x, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

inline double dot_raw(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void matmul_row(const double* arow, const double* b, double* crow, int k, int m) {
    for (int j = 0; j < m; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + static_cast<size_t>(p) * m;
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_nt_row(const double* dcrow, const double* b, double* darow, int k, int m) {
    for (int p = 0; p < k; ++p)
        darow[p] += dot_raw(dcrow, b + static_cast<size_t>(p) * m, static_cast<size_t>(m));
}

}  // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

double sum(std::span<const double> x) {
    const size_t n = x.size();
    if (n == 0) return 0.0;
    const size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    if (nblocks == 1) return block_sum_raw(x.data(), n);
    std::vector<double> partial(nblocks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
        const size_t lo = static_cast<size_t>(b) * kSumBlock;
        partial[b] = block_sum_raw(x.data() + lo, std::min(kSumBlock, n - lo));
    }
    return block_sum_raw(partial.data(), nblocks);
}

double mean(std::span<const double> x) { return x.empty() ? 0.0 : sum(x) / static_cast<double>(x.size()); }

double dot(const double* a, const double* b, size_t n) { return dot_raw(a, b, n); }

void matmul(const double* a, const double* b, double* c, int n, int k, int m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel_rows(n))
#endif
    for (int i = 0; i < n; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * m, k, m);
}

void matmul_acc_nt(const double* dc, const double* b, double* da, int n, int k, int m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel_rows(n))
#endif
    for (int i = 0; i < n; ++i)
        matmul_nt_row(dc + static_cast<size_t>(i) * m, b, da + static_cast<size_t>(i) * k, k, m);
}

void matmul_acc_tn(const double* a, const double* dc, double* db, int n, int k, int m) {
    // db rows are independent; accumulation over samples stays in i-order.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel_rows(k))
#endif
    for (int p = 0; p < k; ++p) {
        double* dbrow = db + static_cast<size_t>(p) * m;
        for (int i = 0; i < n; ++i) {
            const double av = a[static_cast<size_t>(i) * k + p];
            const double* dcrow = dc + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

void add_bias(const double* a, const double* bias, double* c, int n, int m) {
    const size_t total = static_cast<size_t>(n) * m;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(total))
#endif
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<size_t>(i) * m;
        double* crow = c + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) crow[j] = arow[j] + bias[j];
    }
}

void bias_grad_acc(const double* dc, double* dbias, int n, int m) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(static_cast<size_t>(n) * m) && m >= 8)
#endif
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += dc[static_cast<size_t>(i) * m + j];
        dbias[j] += s;
    }
}

void relu(const double* x, double* y, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_acc(const double* x, const double* dy, double* dx, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
}

void vsub(const double* a, const double* b, double* c, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) c[i] = a[i] - b[i];
}

void vmul(const double* a, const double* b, double* c, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) c[i] = a[i] * b[i];
}

void vsquare(const double* x, double* y, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = x[i] * x[i];
}

void vabs(const double* x, double* y, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = std::fabs(x[i]);
}

void axpy(double alpha, const double* x, double* y, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] += alpha * x[i];
}

void vscale(double alpha, double* x, size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (go_parallel(n))
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) x[i] *= alpha;
}

namespace serial {

double sum(std::span<const double> x) {
    const size_t n = x.size();
    if (n == 0) return 0.0;
    const size_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    if (nblocks == 1) return block_sum_raw(x.data(), n);
    std::vector<double> partial(nblocks);
    for (size_t b = 0; b < nblocks; ++b) {
        const size_t lo = b * kSumBlock;
        partial[b] = block_sum_raw(x.data() + lo, std::min(kSumBlock, n - lo));
    }
    return block_sum_raw(partial.data(), nblocks);
}

void matmul(const double* a, const double* b, double* c, int n, int k, int m) {
    for (int i = 0; i < n; ++i)
        matmul_row(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * m, k, m);
}

void matmul_acc_nt(const double* dc, const double* b, double* da, int n, int k, int m) {
    for (int i = 0; i < n; ++i)
        matmul_nt_row(dc + static_cast<size_t>(i) * m, b, da + static_cast<size_t>(i) * k, k, m);
}

void matmul_acc_tn(const double* a, const double* dc, double* db, int n, int k, int m) {
    for (int p = 0; p < k; ++p) {
        double* dbrow = db + static_cast<size_t>(p) * m;
        for (int i = 0; i < n; ++i) {
            const double av = a[static_cast<size_t>(i) * k + p];
            const double* dcrow = dc + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

void add_bias(const double* a, const double* bias, double* c, int n, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = a + static_cast<size_t>(i) * m;
        double* crow = c + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) crow[j] = arow[j] + bias[j];
    }
}

void bias_grad_acc(const double* dc, double* dbias, int n, int m) {
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += dc[static_cast<size_t>(i) * m + j];
        dbias[j] += s;
    }
}

void relu(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void vmul(const double* a, const double* b, double* c, size_t n) {
    for (size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

}  // namespace serial

}  // namespace cdml::kernels
