#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gibbslab/common.hpp"
#include "gibbslab/rng.hpp"

namespace gibbslab {

// Value plus uncertainty and the sampling effort that produced it.
struct Estimate {
    double value = 0;
    double stderr_ = 0;
    long n_disorder = 0;
    long n_replica_blocks = 0;
    long mcmc_steps = 0;
};

inline double mean(std::span<const double> v) {
    check_arg(!v.empty(), "mean: empty sample");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
    check_arg(v.size() >= 2, "sample_variance: need at least 2 values");
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += sq(x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double stderr_of_mean(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

// Contiguous batches for batch-means error estimation of correlated series.
inline std::vector<double> batch_means(std::span<const double> series, int n_batches) {
    check_arg(n_batches >= 1, "batch_means: need at least one batch");
    const size_t n = series.size();
    const size_t nb = std::min<size_t>(n_batches, n);
    std::vector<double> out;
    out.reserve(nb);
    for (size_t b = 0; b < nb; ++b) {
        const size_t lo = b * n / nb, hi = (b + 1) * n / nb;
        double s = 0;
        for (size_t i = lo; i < hi; ++i) s += series[i];
        out.push_back(s / static_cast<double>(hi - lo));
    }
    return out;
}

// Bootstrap stderr of an arbitrary statistic over exchangeable units.
// fn receives resampled unit indices; the rng stream makes it reproducible.
inline double bootstrap_stderr(size_t n_units, int n_boot, Rng& rng,
                               const std::function<double(std::span<const size_t>)>& fn) {
    check_arg(n_units >= 2, "bootstrap_stderr: need at least 2 units");
    std::vector<double> reps(n_boot);
    std::vector<size_t> idx(n_units);
    for (int b = 0; b < n_boot; ++b) {
        for (auto& i : idx) i = rng.uniform_int(n_units);
        reps[b] = fn(idx);
    }
    const double m = mean(reps);
    double s = 0;
    for (double r : reps) s += sq(r - m);
    return std::sqrt(s / static_cast<double>(n_boot - 1));
}

inline double bootstrap_stderr_of_mean(std::span<const double> values, int n_boot, Rng& rng) {
    return bootstrap_stderr(values.size(), n_boot, rng,
                            [&](std::span<const size_t> idx) {
                                double s = 0;
                                for (size_t i : idx) s += values[i];
                                return s / static_cast<double>(idx.size());
                            });
}

// --- Kolmogorov-Smirnov ---

// One-sample KS statistic against a cdf.
inline double ks_statistic(std::vector<double> data, const std::function<double(double)>& cdf) {
    check_arg(!data.empty(), "ks_statistic: empty sample");
    std::sort(data.begin(), data.end());
    const double n = static_cast<double>(data.size());
    double d = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const double f = cdf(data[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

inline double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
    check_arg(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// Asymptotic critical value at the 1% level.
inline double ks_critical_1pct(size_t n) {
    return 1.62762 / std::sqrt(static_cast<double>(n));
}

inline double ks_two_sample_critical_1pct(size_t n, size_t m) {
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return 1.62762 * std::sqrt((nn + mm) / (nn * mm));
}

} // namespace gibbslab
