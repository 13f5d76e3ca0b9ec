#pragma once

// Deterministic Gibbs expectations for validating every Monte Carlo
// estimator: 1D quadrature for separable models at any N, tensor-product
// quadrature for coupled models at N <= 3, free entropies, and certified
// truncated Poisson averages.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "gibbslab/common.hpp"
#include "gibbslab/models.hpp"
#include "gibbslab/quadrature.hpp"

namespace gibbslab {

// Full single-site potential of the regularized, perturbed model:
// model term + ridge + strength-t perturbation polynomial.
inline std::function<double(double)> site_total_potential(const DisorderSample& d, double eps,
                                                          int i, double t) {
    check_arg(d.model->separable(), "site_total_potential: model is not separable");
    const auto* model = d.model.get();
    const bool pert = d.has_pert && t > 0;
    const PerturbationState* state = pert ? &d.pert : nullptr;
    return [model, eps, i, t, state](double x) {
        double phi = model->site_potential(i, x) - 0.5 * eps * x * x;
        if (state) phi -= t * state->site_polynomial(i, x);
        return phi;
    };
}

// --- separable oracle (product measure, exact per-site quadrature) ---

class SeparableOracle {
public:
    SeparableOracle(const DisorderSample& d, double eps, double t)
        : d_(d), eps_(eps), t_(t) {
        check_arg(d.model->separable(), "SeparableOracle: model is not separable");
    }
    SeparableOracle(const DisorderSample& d, double eps)
        : SeparableOracle(d, eps, d.has_pert ? d.pert.t : 0.0) {}

    int size() const { return d_.N; }

    // <sigma_i^p> under the site measure
    double site_moment(int i, int p) const {
        check_arg(i >= 0 && i < d_.N, "site_moment: site out of range");
        if (p == 0) return 1.0;
        const auto key = std::make_pair(i, p);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto phi = site_total_potential(d_, eps_, i, t_);
        const double v = fast_gibbs_moment_1d(phi, p).value;
        cache_.emplace(key, v);
        return v;
    }

    std::vector<double> site_moments(int i, std::span<const int> powers) const {
        std::vector<double> out;
        out.reserve(powers.size());
        for (int p : powers) out.push_back(site_moment(i, p));
        return out;
    }

    double multioverlap_mean(std::span<const int> k) const {
        double acc = 0;
        for (int i = 0; i < d_.N; ++i) {
            double prod = 1;
            for (int kl : k) prod *= site_moment(i, kl);
            acc += prod;
        }
        return acc / d_.N;
    }

    double multioverlap_square(std::span<const int> k) const {
        // <R^2> = N^-2 sum_{i,j} prod_l <sigma_i^{k_l} sigma_j^{k_l}>
        const int N = d_.N;
        double acc = 0;
        for (int i = 0; i < N; ++i) {
            double diag = 1;
            for (int kl : k) diag *= site_moment(i, 2 * kl);
            acc += diag;
            for (int j = 0; j < N; ++j) {
                if (j == i) continue;
                double cross = 1;
                for (int kl : k) cross *= site_moment(i, kl) * site_moment(j, kl);
                acc += cross;
            }
        }
        return acc / (static_cast<double>(N) * N);
    }

    double thermal_variance(std::span<const int> k) const {
        const double m = multioverlap_mean(k);
        return multioverlap_square(k) - m * m;
    }

    double free_entropy() const {
        double acc = 0;
        for (int i = 0; i < d_.N; ++i)
            acc += log_partition_1d(site_total_potential(d_, eps_, i, t_), 1e-12);
        return acc;
    }

    // cdf of the site-i marginal, tabulated once on a fine grid
    std::function<double(double)> site_cdf(int i, int grid = 16384) const {
        const auto phi = site_total_potential(d_, eps_, i, t_);
        double mx = -INFINITY;
        std::vector<double> vals(grid + 1);
        for (int g = 0; g <= grid; ++g) {
            const double x = -1.0 + 2.0 * g / grid;
            vals[g] = phi(x);
            mx = std::max(mx, vals[g]);
        }
        auto cum = std::make_shared<std::vector<double>>(grid + 1, 0.0);
        const double h = 2.0 / grid;
        for (int g = 1; g <= grid; ++g)
            (*cum)[g] = (*cum)[g - 1] +
                        0.5 * h * (std::exp(vals[g - 1] - mx) + std::exp(vals[g] - mx));
        const double total = cum->back();
        for (auto& c : *cum) c /= total;
        return [cum, grid](double x) {
            if (x <= -1.0) return 0.0;
            if (x >= 1.0) return 1.0;
            const double pos = (x + 1.0) / 2.0 * grid;
            const int g = static_cast<int>(pos);
            const double frac = pos - g;
            return (*cum)[g] * (1 - frac) + (*cum)[std::min(g + 1, grid)] * frac;
        };
    }

private:
    const DisorderSample& d_;
    double eps_;
    double t_;
    mutable std::map<std::pair<int, int>, double> cache_;
};

// --- grid oracle (tensor quadrature, N <= 3) ---

class GridOracle {
public:
    // points_per_axis is rounded up to whole 16-point panels
    GridOracle(const DisorderSample& d, double eps, int points_per_axis = 48)
        : d_(d), eps_(eps) {
        check_arg(d.N <= 3, "GridOracle: dimension too large (N must be <= 3)");
        check_arg(points_per_axis >= 41, "GridOracle: need at least 41 points per axis");
        build(points_per_axis);
    }

    int size() const { return d_.N; }
    const std::vector<double>& axis_nodes() const { return nodes_; }
    double log_partition() const { return log_z_; }

    // <prod_i sigma_i^{a_i}> for one replica
    double joint_moment(std::span<const int> a) const {
        check_arg(static_cast<int>(a.size()) == d_.N, "joint_moment: exponent length mismatch");
        const int P = static_cast<int>(nodes_.size());
        double acc = 0;
        std::vector<int> idx(d_.N, 0);
        for (size_t cell = 0; cell < q_.size(); ++cell) {
            size_t rem = cell;
            double prod = q_[cell];
            for (int i = 0; i < d_.N; ++i) {
                const int g = static_cast<int>(rem % P);
                rem /= P;
                if (a[i] != 0) prod *= std::pow(nodes_[g], a[i]);
            }
            acc += prod;
        }
        return acc;
    }

    double multioverlap_mean(std::span<const int> k) const {
        const int N = d_.N;
        double acc = 0;
        std::vector<int> a(N, 0);
        for (int i = 0; i < N; ++i) {
            double prod = 1;
            for (int kl : k) {
                std::fill(a.begin(), a.end(), 0);
                a[i] = kl;
                prod *= joint_moment(a);
            }
            acc += prod;
        }
        return acc / N;
    }

    double multioverlap_square(std::span<const int> k) const {
        const int N = d_.N;
        double acc = 0;
        std::vector<int> a(N, 0);
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                double prod = 1;
                for (int kl : k) {
                    std::fill(a.begin(), a.end(), 0);
                    a[i] += kl;
                    a[j] += kl;
                    prod *= joint_moment(a);
                }
                acc += prod;
            }
        }
        return acc / (static_cast<double>(N) * N);
    }

    double thermal_variance(std::span<const int> k) const {
        const double m = multioverlap_mean(k);
        return multioverlap_square(k) - m * m;
    }

    // Generic expectation over n conditionally independent replicas.
    // The observable sees a flat replica-major buffer of length n*N.
    double replicated_expectation(int n_replicas,
                                  const std::function<double(std::span<const double>)>& obs) const {
        const int dims = d_.N * n_replicas;
        check_arg(dims <= 9, "replicated_expectation: dimension too large (N*n must be <= 9)");
        const int P = static_cast<int>(nodes_.size());
        double cells = 1;
        for (int i = 0; i < dims; ++i) {
            cells *= P;
            check_arg(cells <= 3e8, "replicated_expectation: grid too large");
        }
        std::vector<double> flat(dims, 0.0);
        return recurse_replicated(0, n_replicas, 1.0, flat, obs);
    }

private:
    void build(int points_per_axis) {
        const int panels = (points_per_axis + 15) / 16;
        const auto& rule = gauss_legendre(16);
        const int P = panels * 16;
        nodes_.resize(P);
        axis_w_.resize(P);
        const double h = 2.0 / panels;
        for (int p = 0; p < panels; ++p) {
            const double c = -1.0 + (p + 0.5) * h, s = 0.5 * h;
            for (int q = 0; q < 16; ++q) {
                nodes_[p * 16 + q] = c + s * rule.nodes[q];
                axis_w_[p * 16 + q] = s * rule.weights[q];
            }
        }
        const int N = d_.N;
        size_t total = 1;
        for (int i = 0; i < N; ++i) total *= P;
        q_.resize(total);
        std::vector<double> sigma(N);
        double mx = -INFINITY;
        for (size_t cell = 0; cell < total; ++cell) {
            size_t rem = cell;
            for (int i = 0; i < N; ++i) {
                sigma[i] = nodes_[rem % P];
                rem /= P;
            }
            const double e = total_energy(d_, sigma, eps_);
            check_domain(std::isfinite(e), "GridOracle: non-finite energy");
            q_[cell] = e;
            mx = std::max(mx, e);
        }
        double z = 0;
        for (size_t cell = 0; cell < total; ++cell) {
            size_t rem = cell;
            double w = 1;
            for (int i = 0; i < N; ++i) {
                w *= axis_w_[rem % P];
                rem /= P;
            }
            q_[cell] = w * std::exp(q_[cell] - mx);
            z += q_[cell];
        }
        for (auto& v : q_) v /= z;
        log_z_ = mx + std::log(z);
    }

    double recurse_replicated(int replica, int n, double weight, std::vector<double>& flat,
                              const std::function<double(std::span<const double>)>& obs) const {
        if (replica == n) return weight * obs(flat);
        const int P = static_cast<int>(nodes_.size());
        const int N = d_.N;
        double acc = 0;
        for (size_t cell = 0; cell < q_.size(); ++cell) {
            size_t rem = cell;
            for (int i = 0; i < N; ++i) {
                flat[replica * N + i] = nodes_[rem % P];
                rem /= P;
            }
            acc += recurse_replicated(replica + 1, n, weight * q_[cell], flat, obs);
        }
        return acc;
    }

    const DisorderSample& d_;
    double eps_;
    std::vector<double> nodes_, axis_w_;
    std::vector<double> q_; // normalized cell masses
    double log_z_ = 0;
};

// --- public operations ---

// <sigma_i^k> for each requested power; separable models only.
inline std::vector<double> separable_gibbs_moments(const DisorderSample& d, double eps, int site,
                                                   std::span<const int> powers) {
    check_arg(d.model->separable(), "separable_gibbs_moments: model is not separable");
    check_arg(site >= 0 && site < d.N, "separable_gibbs_moments: site out of range");
    const double t = d.has_pert ? d.pert.t : 0.0;
    std::vector<double> out;
    out.reserve(powers.size());
    const auto phi = site_total_potential(d, eps, site, t);
    for (int p : powers) out.push_back(quadrature_moment_1d(phi, p).value);
    return out;
}

// Brute-force replicated expectation for N*n <= 9 grid dimensions.
inline double grid_gibbs_expectation(const DisorderSample& d, double eps, int n_replicas,
                                     const std::function<double(std::span<const double>)>& obs,
                                     int points_per_axis = 48) {
    GridOracle oracle(d, eps, points_per_axis);
    return oracle.replicated_expectation(n_replicas, obs);
}

// ln Z' of the full (regularized, perturbed) model.
inline double free_entropy(const DisorderSample& d, double eps) {
    if (d.model->separable()) {
        SeparableOracle oracle(d, eps);
        return oracle.free_entropy();
    }
    check_arg(d.N <= 3, "free_entropy: unsupported model size (need separable or N <= 3)");
    // doubling certifies the 1e-8 error target
    GridOracle coarse(d, eps, 48), fine(d, eps, 96);
    const double a = coarse.log_partition(), b = fine.log_partition();
    check_invariant(std::fabs(a - b) <= 1e-8, "free_entropy: grid quadrature did not converge");
    return b;
}

struct PoissonAverage {
    double value = 0;
    long cutoff = 0; // reported R
};

// sum_{r<=R} e^{-s} s^r/r! f(r), with R chosen so the tail mass times the
// stated bound on |f| is below tol.
inline PoissonAverage truncated_poisson_average(const std::function<double(long)>& f, double s,
                                                double f_bound, double tol) {
    check_arg(s >= 0, "truncated_poisson_average: s must be non-negative");
    check_arg(tol > 0, "truncated_poisson_average: tolerance must be positive");
    check_arg(f_bound >= 0 && std::isfinite(f_bound),
              "truncated_poisson_average: f must be bounded");
    double pmf = std::exp(-s);
    double mass = pmf;
    double acc = pmf * f(0);
    long r = 0;
    const long hard_cap = static_cast<long>(s + 20 * std::sqrt(s + 1.0) + 200);
    while ((1.0 - mass) * f_bound > tol && r < hard_cap) {
        ++r;
        pmf *= s / static_cast<double>(r);
        mass += pmf;
        acc += pmf * f(r);
    }
    return {acc, r};
}

// Variant for |f(r)| <= slope * r: tail bound slope * s * P(pi >= R).
inline PoissonAverage truncated_poisson_average_linear(const std::function<double(long)>& f,
                                                       double s, double slope, double tol) {
    check_arg(s >= 0 && tol > 0 && slope >= 0, "truncated_poisson_average_linear: bad arguments");
    double pmf = std::exp(-s);
    double mass = pmf;
    double acc = pmf * f(0);
    long r = 0;
    const long hard_cap = static_cast<long>(s + 20 * std::sqrt(s + 1.0) + 200);
    // sum_{r>R} r pmf(r) = s * P(pi >= R), so the tail of |f| is <= slope*s*P(pi >= R)
    while (slope * s * (1.0 - mass + pmf) > tol && r < hard_cap) {
        ++r;
        pmf *= s / static_cast<double>(r);
        mass += pmf;
        acc += pmf * f(r);
    }
    return {acc, r};
}

// Unified thermal multioverlap statistics for oracle-eligible models.
inline double oracle_multioverlap_mean(const DisorderSample& d, double eps,
                                       std::span<const int> k) {
    if (d.model->separable()) return SeparableOracle(d, eps).multioverlap_mean(k);
    return GridOracle(d, eps).multioverlap_mean(k);
}

inline double oracle_thermal_variance(const DisorderSample& d, double eps,
                                      std::span<const int> k) {
    if (d.model->separable()) return SeparableOracle(d, eps).thermal_variance(k);
    return GridOracle(d, eps).thermal_variance(k);
}

} // namespace gibbslab
