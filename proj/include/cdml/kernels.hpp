#pragma once

#include <cstddef>
#include <span>

namespace cdml::kernels {

/// Runtime switch for the OpenMP paths. The parallel and serial variants of
/// every kernel share the same per-element accumulation helpers, so results
/// are bit-identical regardless of this flag or the thread count.
void set_parallel(bool on);
bool parallel_enabled();
int max_threads();

// ---- reductions ------------------------------------------------------------
// Fixed-block two-level summation: per-block serial sums combined in block
// order. The block layout does not depend on the thread count.
double sum(std::span<const double> x);
double mean(std::span<const double> x);
double dot(const double* a, const double* b, size_t n);

// ---- matmul family (row-major) ---------------------------------------------
// c[n x m] = a[n x k] * b[k x m]
void matmul(const double* a, const double* b, double* c, int n, int k, int m);
// da[n x k] += dc[n x m] * b[k x m]^T
void matmul_acc_nt(const double* dc, const double* b, double* da, int n, int k, int m);
// db[k x m] += a[n x k]^T * dc[n x m]
void matmul_acc_tn(const double* a, const double* dc, double* db, int n, int k, int m);

// ---- elementwise -----------------------------------------------------------
void add_bias(const double* a, const double* bias, double* c, int n, int m);
// column sums of dc accumulated into dbias[m]
void bias_grad_acc(const double* dc, double* dbias, int n, int m);
void relu(const double* x, double* y, size_t n);
// dx += dy where x > 0
void relu_grad_acc(const double* x, const double* dy, double* dx, size_t n);
void vsub(const double* a, const double* b, double* c, size_t n);
void vmul(const double* a, const double* b, double* c, size_t n);
void vsquare(const double* x, double* y, size_t n);
void vabs(const double* x, double* y, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);  // y += alpha*x
void vscale(double alpha, double* x, size_t n);

namespace serial {
// Plain-loop reference implementations, kept for testing the OpenMP paths.
double sum(std::span<const double> x);
void matmul(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_acc_nt(const double* dc, const double* b, double* da, int n, int k, int m);
void matmul_acc_tn(const double* a, const double* dc, double* db, int n, int k, int m);
void add_bias(const double* a, const double* bias, double* c, int n, int m);
void bias_grad_acc(const double* dc, double* dbias, int n, int m);
void relu(const double* x, double* y, size_t n);
void vmul(const double* a, const double* b, double* c, size_t n);
}  // namespace serial

}  // namespace cdml::kernels
