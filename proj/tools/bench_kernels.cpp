// Benchmark comparing the serial reference kernels against the OpenMP paths,
// plus end-to-end timings for the compute-heavy stages (joint training,
// forest fitting, Monte Carlo bias integration).

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "cdml/analysis.hpp"
#include "cdml/cdml.hpp"
#include "cdml/kernels.hpp"
#include "cdml/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cdml;
namespace k = kernels;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void row(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-34s %10.3f %10.3f %8.2fx  %s\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms, identical ? "bit-identical" : "DIFFERS");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif
    std::printf("%-34s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

    Rng rng(1);
    {
        const int n = 2000, kk = 13, m = 13;
        Vec a(static_cast<size_t>(n) * kk), b(static_cast<size_t>(kk) * m);
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        Vec c1(static_cast<size_t>(n) * m), c2 = c1;
        const double ts = time_ms([&] { k::serial::matmul(a.data(), b.data(), c1.data(), n, kk, m); }, 200);
        const double tp = time_ms([&] { k::matmul(a.data(), b.data(), c2.data(), n, kk, m); }, 200);
        row("matmul 2000x13x13", ts, tp, c1 == c2);
    }
    {
        Vec v(1 << 20);
        for (double& x : v) x = rng.normal();
        double s1 = 0, s2 = 0;
        const double ts = time_ms([&] { s1 = k::serial::sum(v); }, 100);
        const double tp = time_ms([&] { s2 = k::sum(v); }, 100);
        row("sum 1M", ts, tp, s1 == s2);
    }
    {
        const int n = 20, d = 10;
        Matrix X(n * 50, d);
        Vec y(static_cast<size_t>(n) * 50);
        for (double& v : X.data) v = rng.normal();
        for (double& v : y) v = rng.normal();
        ForestConfig cfg;
        cfg.seed = 3;
        Forest f1, f2;
        k::set_parallel(false);
        const double ts = time_ms([&] { f1 = fit_forest(X, y, cfg); }, 3);
        k::set_parallel(true);
        const double tp = time_ms([&] { f2 = fit_forest(X, y, cfg); }, 3);
        Vec p1 = predict_forest(f1, X), p2 = predict_forest(f2, X);
        row("fit_forest 1000x10, 20 trees", ts, tp, p1 == p2);
    }
    {
        DgpConfig dgp;
        dgp.n = 2000;
        dgp.seed = 5;
        const Dataset data = sample_plr(dgp);
        const SplitIndices splits = split_indices(dgp.n, {0.5, 0.25, 0.25}, 1);
        CdmlNetConfig net;
        net.train.max_epochs = 200;
        net.train.patience = 200;
        double t1 = 0, t2 = 0;
        k::set_parallel(false);
        const double ts = time_ms(
            [&] {
                t1 = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune,
                                    {1, 1, 0.5, 1}, net, 7)
                         .theta_hat;
            },
            1);
        k::set_parallel(true);
        const double tp = time_ms(
            [&] {
                t2 = run_cdml_fixed(data, splits.train, splits.estimation(), splits.tune,
                                    {1, 1, 0.5, 1}, net, 7)
                         .theta_hat;
            },
            1);
        row("joint fit n=1000, 200 epochs", ts, tp, t1 == t2);
    }
    {
        DgpConfig dgp;
        dgp.seed = 9;
        const NuisancePair pair = oracle_pair(dgp);
        BiasReport b1, b2;
        k::set_parallel(false);
        const double ts = time_ms([&] { b1 = theoretical_bias(pair, dgp, 1.0, 100000, 3); }, 2);
        k::set_parallel(true);
        const double tp = time_ms([&] { b2 = theoretical_bias(pair, dgp, 1.0, 100000, 3); }, 2);
        row("bias Monte Carlo 1e5 draws", ts, tp, b1.b_dml == b2.b_dml);
    }
    return 0;
}
