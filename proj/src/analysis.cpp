#include "cdml/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "cdml/kernels.hpp"
#include "cdml/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cdml {

namespace k = kernels;

namespace {

constexpr int kBiasBatch = 10000;

double hash_normal(const double* row, int d, uint64_t seed) {
    uint64_t h = fnv1a64(row, static_cast<size_t>(d) * sizeof(double), 0xcbf29ce484222325ULL ^ seed);
    uint64_t state = h;
    const uint64_t a = splitmix64(state);
    const uint64_t b = splitmix64(state);
    const double u1 = 1.0 - static_cast<double>(a >> 11) * 0x1.0p-53;  // (0,1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double sd_of_mean(double sum, double sum_sq, double n) {
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    return std::sqrt(var / n);
}

}  // namespace

Vec PerturbedRegressor::predict(const Matrix& X) const {
    Vec out = base_->predict(X);
    for (int i = 0; i < X.rows; ++i) out[i] += sigma_ * hash_normal(X.row(i), X.cols, seed_);
    return out;
}

NuisancePair perturb_lhat(const NuisancePair& pair, double sigma_l, uint64_t seed) {
    require(pair.l_hat != nullptr, "perturb_lhat: pair has no outcome model");
    require(sigma_l >= 0.0, "perturb_lhat: sigma must be nonnegative");
    NuisancePair out = pair;
    out.l_hat = std::make_shared<PerturbedRegressor>(pair.l_hat, sigma_l, seed);
    return out;
}

BiasReport theoretical_bias(const NuisancePair& pair, const DgpConfig& dgp, double theta, int mc_n,
                            uint64_t seed) {
    require(pair.m_hat && pair.l_hat, "theoretical_bias: nuisance pair is not fitted");
    require(mc_n >= 10000, "theoretical_bias: mc_n must be at least 10^4 for a usable estimate");

    const int n_batches = (mc_n + kBiasBatch - 1) / kBiasBatch;
    Vec sum_dmdl(n_batches, 0.0), sum_dmdl_sq(n_batches, 0.0);
    Vec sum_dm2(n_batches, 0.0), sum_dm2_sq(n_batches, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (k::parallel_enabled() && !omp_in_parallel())
#endif
    for (int b = 0; b < n_batches; ++b) {
        const int lo = b * kBiasBatch;
        const int count = std::min(kBiasBatch, mc_n - lo);
        const Matrix X = sample_ar1(count, dgp.d, dgp.rho, derive_seed(seed, "bias/x", b));
        const Vec m_true = oracle_m(dgp, X);
        Vec l_true = oracle_g(dgp, X);
        for (int i = 0; i < count; ++i) l_true[i] += theta * m_true[i];
        const Vec m_pred = pair.m_hat->predict(X);
        const Vec l_pred = pair.l_hat->predict(X);
        Vec prod(count), sq(count), prod2(count), sq2(count);
        for (int i = 0; i < count; ++i) {
            const double dm = m_true[i] - m_pred[i];
            const double dl = l_true[i] - l_pred[i];
            prod[i] = dm * dl;
            sq[i] = dm * dm;
            prod2[i] = prod[i] * prod[i];
            sq2[i] = sq[i] * sq[i];
        }
        sum_dmdl[b] = k::sum(prod);
        sum_dm2[b] = k::sum(sq);
        sum_dmdl_sq[b] = k::sum(prod2);
        sum_dm2_sq[b] = k::sum(sq2);
    }

    const double n = static_cast<double>(mc_n);
    const double s1 = k::sum(sum_dmdl), s1q = k::sum(sum_dmdl_sq);
    const double s2 = k::sum(sum_dm2), s2q = k::sum(sum_dm2_sq);

    BiasReport rep;
    rep.e_dm_dl = s1 / n;
    rep.e_dm_sq = s2 / n;
    rep.var_V = dgp.sigma_v * dgp.sigma_v;
    rep.theta_used = theta;
    rep.mc_n = mc_n;
    rep.se_dm_dl = sd_of_mean(s1, s1q, n);
    rep.se_dm_sq = sd_of_mean(s2, s2q, n);
    const double denom = rep.var_V + rep.e_dm_sq;
    require(denom > 0.0, "theoretical_bias: Var(V) + E[dm^2] must be positive");
    rep.b_dml = (rep.e_dm_dl - theta * rep.e_dm_sq) / denom;
    return rep;
}

MetricsReport replication_metrics(const std::vector<RepRecord>& records) {
    require(!records.empty(), "replication_metrics: no replications supplied");
    const size_t R = records.size();
    const bool with_errors = !records.front().dm.empty();
    for (const auto& r : records) {
        require(r.dm.size() == r.dl.size(), "replication_metrics: dm/dl length mismatch");
        require(r.dm.empty() == !with_errors,
                "replication_metrics: either every record or none carries nuisance errors");
    }

    MetricsReport m;
    m.n_reps = static_cast<int>(R);
    m.has_nuisance_errors = with_errors;
    m.rep_error.resize(R);
    Vec err_sq(R);
    for (size_t r = 0; r < R; ++r) {
        m.rep_error[r] = records[r].theta_hat - records[r].theta;
        err_sq[r] = m.rep_error[r] * m.rep_error[r];
    }
    auto aggregate = [&](const Vec& v, double& out, double& se) {
        out = k::mean(v);
        double ssq = 0.0;
        for (double x : v) ssq += x * x;
        se = R > 1 ? sd_of_mean(k::sum(v), ssq, static_cast<double>(R)) : 0.0;
    };
    aggregate(m.rep_error, m.bias, m.se_bias);
    aggregate(err_sq, m.mse, m.se_mse);

    if (with_errors) {
        m.rep_abs_cov.resize(R);
        m.rep_mse_m.resize(R);
        m.rep_mse_l.resize(R);
        for (size_t r = 0; r < R; ++r) {
            const Vec& dm = records[r].dm;
            const Vec& dl = records[r].dl;
            Vec buf(dm.size());
            k::vmul(dm.data(), dl.data(), buf.data(), buf.size());
            m.rep_abs_cov[r] = std::fabs(k::mean(buf));
            k::vmul(dm.data(), dm.data(), buf.data(), buf.size());
            m.rep_mse_m[r] = k::mean(buf);
            k::vmul(dl.data(), dl.data(), buf.data(), buf.size());
            m.rep_mse_l[r] = k::mean(buf);
        }
        aggregate(m.rep_abs_cov, m.abs_cov_dm_dl, m.se_abs_cov_dm_dl);
        aggregate(m.rep_mse_m, m.mse_m, m.se_mse_m);
        aggregate(m.rep_mse_l, m.mse_l, m.se_mse_l);
    }
    return m;
}

std::pair<double, double> percentile_bounds(Vec stats, double level) {
    require(!stats.empty(), "percentile_bounds: no statistics");
    require(level > 0.0 && level < 1.0, "percentile_bounds: level must be in (0,1)");
    std::sort(stats.begin(), stats.end());
    const int B = static_cast<int>(stats.size());
    const double tail = (1.0 - level) / 2.0;
    // epsilon guards keep exact rank products (e.g. 200 * 0.025) from
    // rounding across the integer boundary
    int lo_rank = static_cast<int>(std::ceil(B * tail - 1e-9));
    int hi_rank = static_cast<int>(std::floor(B * (1.0 - tail) + 1e-9));
    lo_rank = std::clamp(lo_rank, 1, B);
    hi_rank = std::clamp(hi_rank, lo_rank, B);
    return {stats[lo_rank - 1], stats[hi_rank - 1]};
}

BootstrapCI bootstrap_ci(const Dataset& data, const std::vector<int>& eval_idx, const NuisancePair& pair,
                         int n_resamples, double level, uint64_t seed) {
    require(eval_idx.size() >= 10, "bootstrap_ci: need at least 10 estimation rows");
    require(n_resamples >= 2, "bootstrap_ci: need at least 2 resamples");
    require(level > 0.0 && level < 1.0, "bootstrap_ci: level must be in (0,1)");

    const ResidualSet base = residuals(data, eval_idx, pair);
    const size_t n = base.treatment.size();

    BootstrapCI ci;
    ci.level = level;
    ci.n_resamples = n_resamples;
    ci.point = estimate_theta(base);

    Vec stats(n_resamples);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (k::parallel_enabled() && !omp_in_parallel())
#endif
    for (int b = 0; b < n_resamples; ++b) {
        Rng rng(derive_seed(seed, "boot", b));
        double theta_b = 0.0;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            double sum_vv = 0.0, sum_vu = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const size_t j = static_cast<size_t>(rng.below(n));
                sum_vv += base.treatment[j] * base.treatment[j];
                sum_vu += base.treatment[j] * base.outcome[j];
            }
            if (sum_vv > 0.0) {
                theta_b = sum_vu / sum_vv;
                ok = true;
            }
        }
        if (!ok) {
            // degenerate resamples exhausted the retry budget; surface later
            theta_b = std::numeric_limits<double>::quiet_NaN();
        }
        stats[b] = theta_b;
    }
    for (double s : stats)
        require(std::isfinite(s), "bootstrap_ci: degenerate resample (all-zero treatment residuals) persisted "
                                  "after 100 redraws");
    std::tie(ci.lower, ci.upper) = percentile_bounds(std::move(stats), level);
    return ci;
}

BootstrapCI bootstrap_ci_full(const Dataset& data, const std::array<double, 3>& fractions,
                              const DmlLearnerConfig& learner, int n_resamples, double level, uint64_t seed) {
    require(data.n() >= 20, "bootstrap_ci_full: dataset too small");
    require(n_resamples >= 2, "bootstrap_ci_full: need at least 2 resamples");

    BootstrapCI ci;
    ci.level = level;
    ci.n_resamples = n_resamples;
    {
        const SplitIndices splits = split_indices(data.n(), fractions, derive_seed(seed, "bootfull/split"));
        ci.point = run_dml(data, splits, learner).report.theta_hat;
    }

    Vec stats(n_resamples);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (k::parallel_enabled() && !omp_in_parallel())
#endif
    for (int b = 0; b < n_resamples; ++b) {
        Rng rng(derive_seed(seed, "bootfull/rows", b));
        const int n = data.n();
        Dataset resampled;
        resampled.X = Matrix(n, data.d());
        resampled.D.resize(n);
        resampled.Y.resize(n);
        for (int i = 0; i < n; ++i) {
            const int j = static_cast<int>(rng.below(n));
            for (int c = 0; c < data.d(); ++c) resampled.X.at(i, c) = data.X.at(j, c);
            resampled.D[i] = data.D[j];
            resampled.Y[i] = data.Y[j];
        }
        resampled.truth = data.truth;
        DmlLearnerConfig cfg = learner;
        cfg.seed = derive_seed(seed, "bootfull/fit", b);
        const SplitIndices splits = split_indices(n, fractions, derive_seed(seed, "bootfull/split", b));
        stats[b] = run_dml(resampled, splits, cfg).report.theta_hat;
    }
    std::tie(ci.lower, ci.upper) = percentile_bounds(std::move(stats), level);
    return ci;
}

LinFit fit_line(const Vec& x, const Vec& y) {
    require(x.size() == y.size() && x.size() >= 2, "fit_line: need at least two points");
    const double mx = k::mean(x);
    const double my = k::mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinFit f;
    require(sxx > 0.0, "fit_line: x values are constant");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

}  // namespace cdml
