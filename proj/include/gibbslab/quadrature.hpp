#pragma once

// Gauss-Legendre quadrature for Gibbs expectations of 1D log-concave site
// measures. Integrands are exponentials of polynomials, so high-order panels
// converge spectrally; the reported error is the change under one panel
// doubling.

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "gibbslab/common.hpp"

namespace gibbslab {

struct GaussLegendreRule {
    std::vector<double> nodes;   // on [-1,1]
    std::vector<double> weights;
};

// Nodes by Newton iteration on P_n; cached per order.
inline const GaussLegendreRule& gauss_legendre(int order) {
    static std::map<int, GaussLegendreRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;
    check_arg(order >= 2 && order <= 256, "gauss_legendre: order out of range");

    GaussLegendreRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const int m = (order + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double pp = 0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < order; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = order * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[order - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.weights[i] = w;
        rule.weights[order - 1 - i] = w;
    }
    auto [pos, _] = cache.emplace(order, std::move(rule));
    return pos->second;
}

struct IntegralResult {
    double value = 0;
    double error_estimate = 0;
    int panels = 0;
};

// Composite GL16 over [a,b] with `panels` equal subintervals.
inline double integrate_panels(const std::function<double(double)>& f, double a, double b,
                               int panels, int order = 16) {
    const auto& rule = gauss_legendre(order);
    const double h = (b - a) / panels;
    double total = 0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double c = lo + 0.5 * h, s = 0.5 * h;
        double acc = 0;
        for (size_t q = 0; q < rule.nodes.size(); ++q)
            acc += rule.weights[q] * f(c + s * rule.nodes[q]);
        total += s * acc;
    }
    return total;
}

// Doubles panels until two refinements agree to tol (absolute + relative).
inline IntegralResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                         double tol = 1e-12, int start_panels = 4,
                                         int max_panels = 4096) {
    double prev = integrate_panels(f, a, b, start_panels);
    int panels = start_panels;
    double err = INFINITY;
    while (panels < max_panels) {
        panels *= 2;
        const double cur = integrate_panels(f, a, b, panels);
        err = std::fabs(cur - prev);
        prev = cur;
        if (err <= tol * (1.0 + std::fabs(cur))) break;
    }
    return {prev, err, panels};
}

// --- Gibbs moments of a 1D potential on [-1,1] ---

struct GibbsMoment1D {
    double value = 0;          // <x^k>
    double error_estimate = 0;
    double log_partition = 0;  // ln of the normalizer
    int panels = 0;
};

namespace detail {

// Scan for the potential maximum so exp() never overflows.
inline double potential_max(const std::function<double(double)>& phi, int scan = 512) {
    double m = -INFINITY;
    for (int i = 0; i <= scan; ++i) {
        const double x = -1.0 + 2.0 * i / scan;
        const double v = phi(x);
        check_domain(std::isfinite(v), "gibbs moment: potential is not finite on [-1,1]");
        if (v > m) m = v;
    }
    return m;
}

inline GibbsMoment1D gibbs_moment_1d_impl(const std::function<double(double)>& phi, int k,
                                          int start_panels, double tol) {
    const double m = potential_max(phi);
    auto den_f = [&](double x) { return std::exp(phi(x) - m); };
    auto num_f = [&](double x) { return std::pow(x, k) * std::exp(phi(x) - m); };

    int panels = start_panels;
    double den = integrate_panels(den_f, -1.0, 1.0, panels);
    double num = (k == 0) ? den : integrate_panels(num_f, -1.0, 1.0, panels);
    double ratio = num / den;
    double err = INFINITY;
    while (panels < 8192) {
        panels *= 2;
        const double den2 = integrate_panels(den_f, -1.0, 1.0, panels);
        const double num2 = (k == 0) ? den2 : integrate_panels(num_f, -1.0, 1.0, panels);
        const double ratio2 = num2 / den2;
        err = std::fabs(ratio2 - ratio);
        den = den2;
        ratio = ratio2;
        if (err <= tol) break;
    }
    return {ratio, err, m + std::log(den), panels};
}

} // namespace detail

// <x^k> under density proportional to exp(phi) on [-1,1].
// `resolution` is the starting panel count (spec floor: 64).
inline GibbsMoment1D quadrature_moment_1d(const std::function<double(double)>& phi, int k,
                                          int resolution = 64) {
    check_arg(k >= 0, "quadrature_moment_1d: negative power");
    check_arg(resolution >= 64, "quadrature_moment_1d: resolution must be >= 64 panels");
    return detail::gibbs_moment_1d_impl(phi, k, resolution, 1e-10);
}

// Internal fast path for bulk estimator work; same integrand class, fewer
// panels, still one doubling so the error remains certified.
inline GibbsMoment1D fast_gibbs_moment_1d(const std::function<double(double)>& phi, int k) {
    return detail::gibbs_moment_1d_impl(phi, k, 4, 1e-11);
}

// ln integral of exp(phi) over [-1,1].
inline double log_partition_1d(const std::function<double(double)>& phi, double tol = 1e-10) {
    return detail::gibbs_moment_1d_impl(phi, 0, 8, tol).log_partition;
}

// <g(x)> for arbitrary g; used for reweighted site observables.
inline double gibbs_expect_1d(const std::function<double(double)>& phi,
                              const std::function<double(double)>& g, double tol = 1e-11) {
    const double m = detail::potential_max(phi);
    auto den_f = [&](double x) { return std::exp(phi(x) - m); };
    auto num_f = [&](double x) { return g(x) * std::exp(phi(x) - m); };
    int panels = 8;
    double ratio = integrate_panels(num_f, -1, 1, panels) / integrate_panels(den_f, -1, 1, panels);
    while (panels < 4096) {
        panels *= 2;
        const double r2 =
            integrate_panels(num_f, -1, 1, panels) / integrate_panels(den_f, -1, 1, panels);
        const double err = std::fabs(r2 - ratio);
        ratio = r2;
        if (err <= tol) break;
    }
    return ratio;
}

} // namespace gibbslab
