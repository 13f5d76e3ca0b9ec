#pragma once

// Franz-de Sanctis machinery: the exact Poisson identity relating the
// perturbation energy to replica-reweighted ratios, its Monte Carlo
// counterpart, and the small convex-analysis utilities used alongside it.
//
// Site-indexed derivation of the identity: with site counts c_i iid
// Poisson(s/N), size-biasing (E[c g(c)] = lambda E[g(c+1)]) turns the
// extra perturbation factor at the incremented site into the reweighting
// e^{-lambda_I P_I}, giving
//   E< f_n E_I(sigma^1) >
//     = s_N E[ < f_n theta e^{-lambda_I sum_l theta^l} > / < e^{-lambda_I theta} >^n ]
// with theta = P_I at an independent uniform site. Everything here is that
// identity, computed exactly (separable oracle) or by replica reweighting.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "gibbslab/estimators.hpp"
#include "gibbslab/oracle.hpp"

namespace gibbslab {

enum class FdsF { One, Sigma1, Sigma1Sigma2 };

inline std::string fds_f_name(FdsF f) {
    switch (f) {
        case FdsF::One: return "1";
        case FdsF::Sigma1: return "sigma1";
        case FdsF::Sigma1Sigma2: return "sigma1_sigma2";
    }
    return "?";
}

namespace detail {

// Site expectations needed by both sides of the identity, under the 1D
// measure with potential phi(x) - lambda*c*P_I(x):
//   m1=<x>, p=<P>, sp=<xP>, w=<E>, pw=<PE>, sw=<xE>, spw=<xPE>, E=e^{-lambda P}
struct FdsSiteVals {
    double m1, p, sp, w, pw, sw, spw;
};

inline FdsSiteVals fds_site_values(const std::function<double(double)>& phi,
                                   const PerturbationIndex& I, double lambda, long c,
                                   int panels = 12) {
    const auto& rule = gauss_legendre(16);
    auto pot = [&](double x) { return phi(x) - lambda * static_cast<double>(c) * poly_P(I, x); };
    double mx = -INFINITY;
    for (int g = 0; g <= 256; ++g) mx = std::max(mx, pot(-1.0 + 2.0 * g / 256));

    double z = 0, m1 = 0, p = 0, sp = 0, w = 0, pw = 0, sw = 0, spw = 0;
    const double h = 2.0 / panels;
    for (int pan = 0; pan < panels; ++pan) {
        const double ctr = -1.0 + (pan + 0.5) * h, s = 0.5 * h;
        for (int q = 0; q < 16; ++q) {
            const double x = ctr + s * rule.nodes[q];
            const double wq = s * rule.weights[q];
            const double dens = wq * std::exp(pot(x) - mx);
            const double P = poly_P(I, x);
            const double E = std::exp(-lambda * P);
            z += dens;
            m1 += dens * x;
            p += dens * P;
            sp += dens * x * P;
            w += dens * E;
            pw += dens * P * E;
            sw += dens * x * E;
            spw += dens * x * P * E;
        }
    }
    return {m1 / z, p / z, sp / z, w / z, pw / z, sw / z, spw / z};
}

} // namespace detail

struct FdsIdentityResult {
    double lhs = 0;
    double rhs = 0;
    double gap = 0;
    long poisson_cutoff = 0;
};

// Deterministic evaluation of both sides of the identity for a separable
// base model at small N. The perturbation consists of the single index I at
// strength t=1; lambda_I is averaged over [1/2,1] by quadrature; the Poisson
// counts are summed 1D per site (certified truncation).
inline FdsIdentityResult fds_identity_check(const DisorderSample& d, double eps,
                                            const PerturbationIndex& I, FdsF f, int n,
                                            double s_N) {
    check_arg(d.model->separable(), "fds_identity_check: model must be separable");
    check_arg(d.N <= 4, "fds_identity_check: model too large for the oracle (N <= 4)");
    check_arg(n >= 1 && n <= 2, "fds_identity_check: n must be 1 or 2");
    check_arg(!(f == FdsF::Sigma1Sigma2 && n < 2),
              "fds_identity_check: sigma1*sigma2 needs n = 2");
    check_arg(s_N >= 0, "fds_identity_check: s_N must be non-negative");
    const int N = d.N;
    const double site_mean = s_N / N;

    // Poisson truncation per site: stop once the remaining mass cannot move
    // either side by 1e-12 (values are bounded by e^2 * (c+1) * weight(I)).
    const double kappa = index_weight(I) * std::exp(2.0) + 1.0;
    long c_max = 1;
    {
        double pmf = std::exp(-site_mean), cum = pmf;
        while ((1.0 - cum) * kappa * (c_max + 1) > 1e-13 && c_max < 64) {
            pmf *= site_mean / static_cast<double>(c_max);
            cum += pmf;
            ++c_max;
        }
    }

    const auto& lrule = gauss_legendre(8);
    double lhs_acc = 0, rhs_acc = 0;
    for (int lq = 0; lq < 8; ++lq) {
        const double lambda = 0.75 + 0.25 * lrule.nodes[lq]; // map to [1/2,1]
        const double lw = 0.25 * lrule.weights[lq] / 0.5;    // mean over [1/2,1]

        // per-site tables of the needed Poisson averages
        std::vector<double> e_cp(N, 0);   // E[c * p_i(c)]
        std::vector<double> e_csp(N, 0);  // E[c * sp_i(c)]
        std::vector<double> e_cspm(N, 0); // E[c * sp_i(c) * m1_i(c)]
        std::vector<double> e_m1(N, 0), e_m1sq(N, 0);
        std::vector<double> e_ratio(N, 0);   // E[pw w^{n-1} / w^n]
        std::vector<double> e_ratio1s(N, 0); // E[spw w^{n-1} / w^n]
        std::vector<double> e_ratio2s(N, 0); // E[spw sw / w^2]  (n = 2 only)
        for (int i = 0; i < N; ++i) {
            const auto phi = site_total_potential(d, eps, i, 0.0);
            double pmf = std::exp(-site_mean);
            for (long c = 0; c <= c_max; ++c) {
                if (c > 0) pmf *= site_mean / static_cast<double>(c);
                const auto v = detail::fds_site_values(phi, I, lambda, c);
                e_cp[i] += pmf * c * v.p;
                e_csp[i] += pmf * c * v.sp;
                e_cspm[i] += pmf * c * v.sp * v.m1;
                e_m1[i] += pmf * v.m1;
                e_m1sq[i] += pmf * v.m1 * v.m1;
                const double wn = pow_int(v.w, n);
                e_ratio[i] += pmf * v.pw * pow_int(v.w, n - 1) / wn;
                e_ratio1s[i] += pmf * v.spw * pow_int(v.w, n - 1) / wn;
                if (n == 2) e_ratio2s[i] += pmf * v.spw * v.sw / wn;
            }
        }

        double lhs = 0, rhs = 0;
        double sum_cp_rest = 0, sum_ratio_rest = 0;
        for (int i = 1; i < N; ++i) {
            sum_cp_rest += e_cp[i];
            sum_ratio_rest += e_ratio[i];
        }
        switch (f) {
            case FdsF::One: {
                for (int i = 0; i < N; ++i) lhs += e_cp[i];
                double r = 0;
                for (int i = 0; i < N; ++i) r += e_ratio[i];
                rhs = s_N * r / N;
                break;
            }
            case FdsF::Sigma1: {
                lhs = e_csp[0] + e_m1[0] * sum_cp_rest;
                rhs = s_N * (e_ratio1s[0] + e_m1[0] * sum_ratio_rest) / N;
                break;
            }
            case FdsF::Sigma1Sigma2: {
                lhs = e_cspm[0] + e_m1sq[0] * sum_cp_rest;
                rhs = s_N * (e_ratio2s[0] + e_m1sq[0] * sum_ratio_rest) / N;
                break;
            }
        }
        lhs_acc += lw * lhs;
        rhs_acc += lw * rhs;
    }

    return {lhs_acc, rhs_acc, std::fabs(lhs_acc - rhs_acc), c_max};
}

// --- Monte Carlo statistic for the Franz-de Sanctis inequality ---

struct FdsStatResult {
    Estimate est;
    int depth = 0;          // geometric-expansion depth actually used
    double expansion_tail = 0; // mean magnitude of the last product term
};

// Exact per-disorder oracle of the two ratio terms (separable models), used
// to validate the Monte Carlo route at small N.
struct FdsTerms {
    double ratio_n = 0;  // < f theta e^{-lambda sum theta} > / < e^{-lambda theta} >^n
    double ratio_1 = 0;  // < theta e^{-lambda theta} > / < e^{-lambda theta} >
    double f_mean = 0;   // < f >
};

inline FdsTerms fds_terms_oracle(const DisorderSample& d, double eps, double t,
                                 const PerturbationIndex& I, FdsF f, int n, double lambda,
                                 int u_site) {
    check_arg(d.model->separable(), "fds_terms_oracle: model must be separable");
    std::vector<detail::FdsSiteVals> v(d.N);
    for (int i = 0; i < d.N; ++i)
        v[i] = detail::fds_site_values(site_total_potential(d, eps, i, t), I, lambda, 0);
    const auto& u = v[u_site];
    FdsTerms out;
    out.ratio_1 = u.pw / u.w;
    switch (f) {
        case FdsF::One:
            out.f_mean = 1.0;
            out.ratio_n = u.pw * pow_int(u.w, n - 1) / pow_int(u.w, n);
            break;
        case FdsF::Sigma1: {
            out.f_mean = v[0].m1;
            const double num = (u_site == 0) ? u.spw : v[0].m1 * u.pw;
            out.ratio_n = num * pow_int(u.w, n - 1) / pow_int(u.w, n);
            break;
        }
        case FdsF::Sigma1Sigma2: {
            out.f_mean = v[0].m1 * v[0].m1;
            const double num =
                (u_site == 0) ? u.spw * u.sw : v[0].m1 * u.pw * v[0].m1 * u.w;
            out.ratio_n = num / pow_int(u.w, 2);
            break;
        }
    }
    return out;
}

struct FdsCellSummary {
    double ratio_n = 0;
    double ratio_1 = 0;
    double f_mean = 0;
    double expansion_tail = 0;
    long mcmc_steps = 0;
};

// Per-disorder ratio estimates by replica reweighting: numerators from block
// 0, the reciprocal of the denominator through the geometric polynomial p_r
// with one independent block estimate per power (blocks cycle when depth
// exceeds the available count). The uniform site comes from the seed lineage
// unless overridden (u_site >= 0).
inline FdsCellSummary fds_cell_summary(const ReplicaEnsemble& ens, const PerturbationIndex& I,
                                       FdsF f, int n, int depth, int u_site = -1) {
    ens.validate();
    check_arg(n >= 1, "fds_statistic: n must be >= 1");
    check_arg(depth >= 1, "fds_statistic: expansion depth must be >= 1");
    check_arg(ens.block_size >= n, "fds_statistic: block size below n");
    check_arg(ens.n_blocks() >= n + 1, "fds_statistic: need at least n+1 blocks");
    check_arg(ens.disorder->has_pert, "fds_statistic: ensemble lacks a perturbation");
    const auto& state = ens.disorder->pert;
    const int pos = state.find_index(I);
    check_arg(pos >= 0, "fds_statistic: index not retained in the truncation");
    const double lambda = state.lambdas[pos];
    const int N = ens.disorder->N;
    if (u_site < 0) {
        Rng rng = Rng::from_path(ens.chain_seed_base, {purpose::usite});
        u_site = static_cast<int>(rng.uniform_int(N));
    }
    const int nb = ens.n_blocks();
    const int T = ens.n_samples();

    auto theta = [&](int block, int l, int t) {
        return poly_P(I, ens.replicas[block * ens.block_size + l].samples[t][u_site]);
    };
    auto f_value = [&](int block, int t) {
        switch (f) {
            case FdsF::One: return 1.0;
            case FdsF::Sigma1: return ens.replicas[block * ens.block_size].samples[t][0];
            case FdsF::Sigma1Sigma2:
                return ens.replicas[block * ens.block_size].samples[t][0] *
                       ens.replicas[block * ens.block_size + 1].samples[t][0];
        }
        return 0.0;
    };

    double rn = 0, r1 = 0, fm = 0, tail_acc = 0;
    for (int t = 0; t < T; ++t) {
        double sum_theta = 0;
        for (int l = 0; l < n; ++l) sum_theta += theta(0, l, t);
        const double a_n = f_value(0, t) * theta(0, 0, t) * std::exp(-lambda * sum_theta);
        const double a_1 = theta(0, 0, t) * std::exp(-lambda * theta(0, 0, t));

        // p_depth(<B>) with independent block estimates per power
        double p_n = 1, p_1 = 1, prod_n = 1, prod_1 = 1;
        for (int m = 1; m <= depth; ++m) {
            const int j = 1 + (m - 1) % (nb - 1);
            double bn = 1;
            for (int l = 0; l < n; ++l) bn *= std::exp(-lambda * theta(j, l, t));
            prod_n *= (1.0 - bn);
            p_n += prod_n;
            prod_1 *= (1.0 - std::exp(-lambda * theta(j, 0, t)));
            p_1 += prod_1;
        }
        tail_acc += std::fabs(prod_n);
        rn += a_n * p_n;
        r1 += a_1 * p_1;
        double fv = 0;
        for (int b = 0; b < nb; ++b) fv += f_value(b, t);
        fm += fv / nb;
    }
    FdsCellSummary out;
    out.ratio_n = rn / T;
    out.ratio_1 = r1 / T;
    out.f_mean = fm / T;
    out.expansion_tail = tail_acc / T;
    out.mcmc_steps = ens.total_steps();
    return out;
}

// | E[ratio_n] - E<f> E[ratio_1] | with independent disorder halves for the
// product of means.
inline FdsStatResult fds_statistic_from_summaries(std::span<const FdsCellSummary> per_disorder,
                                                  int depth, uint64_t boot_seed) {
    const size_t D = per_disorder.size();
    check_arg(D >= 2, "fds_statistic: need at least 2 disorder samples");

    auto compute = [&](std::span<const size_t> idx) {
        double t1 = 0, fe = 0, r1o = 0;
        size_t ne = 0, no = 0;
        for (size_t pos = 0; pos < idx.size(); ++pos) {
            t1 += per_disorder[idx[pos]].ratio_n;
            if (pos % 2 == 0) {
                fe += per_disorder[idx[pos]].f_mean;
                ++ne;
            } else {
                r1o += per_disorder[idx[pos]].ratio_1;
                ++no;
            }
        }
        t1 /= idx.size();
        return std::fabs(t1 - (fe / ne) * (no ? r1o / no : 0.0));
    };
    std::vector<size_t> all(D);
    for (size_t i = 0; i < D; ++i) all[i] = i;
    const double v0 = compute(all);
    Rng rng(boot_seed);
    std::vector<double> reps(300);
    std::vector<size_t> idx(D);
    for (auto& rep : reps) {
        for (auto& i : idx) i = rng.uniform_int(D);
        rep = compute(idx);
    }

    FdsStatResult out;
    double tail = 0;
    long steps = 0;
    for (const auto& s : per_disorder) {
        tail += s.expansion_tail;
        steps += s.mcmc_steps;
    }
    out.est = Estimate{v0, std::sqrt(sample_variance(reps)), static_cast<long>(D), 0, steps};
    out.depth = depth;
    out.expansion_tail = tail / D;
    return out;
}

inline FdsStatResult fds_statistic(std::span<const ReplicaEnsemble> ensembles,
                                   const PerturbationIndex& I, FdsF f, int n, int depth = 12,
                                   std::span<const int> u_sites = {}, uint64_t boot_seed = 1) {
    check_arg(u_sites.empty() || u_sites.size() == ensembles.size(),
              "fds_statistic: u_sites must match the ensemble count");
    std::vector<FdsCellSummary> summaries;
    summaries.reserve(ensembles.size());
    for (size_t d = 0; d < ensembles.size(); ++d)
        summaries.push_back(fds_cell_summary(ensembles[d], I, f, n, depth,
                                             u_sites.empty() ? -1 : u_sites[d]));
    return fds_statistic_from_summaries(summaries, depth, boot_seed);
}

// --- reciprocal polynomial p_r(x) = sum_{m<=r} (1-x)^m ---

inline double reciprocal_poly(double x, int r) {
    check_arg(r >= 0, "reciprocal_poly: r must be >= 0");
    check_domain(x >= std::exp(-2.0) && x < 1.0, "reciprocal_poly: x outside [e^-2, 1)");
    double acc = 1, term = 1;
    for (int m = 1; m <= r; ++m) {
        term *= (1.0 - x);
        acc += term;
    }
    return acc;
}

// uniform bound on |p_r - 1/x| over the domain
inline double reciprocal_poly_error_bound(int r) {
    return std::exp(2.0) * std::pow(1.0 - std::exp(-2.0), r + 1);
}

// --- bound for convex functions: |G'(x)-g'(x)| vs divided differences ---

struct C1Function {
    std::function<double(double)> f;
    std::function<double(double)> df;
};

namespace detail {

inline void require_convex_near(const C1Function& fn, double x, double delta,
                                const char* which) {
    for (double u : {x - delta, x, x + delta}) {
        const double h = delta / 2;
        const double second = fn.f(u - h) - 2 * fn.f(u) + fn.f(u + h);
        if (second < -1e-9 * (1.0 + std::fabs(fn.f(u))))
            throw std::domain_error(std::string("convex_derivative_gap_bound: ") + which +
                                    " fails the second-difference convexity test");
    }
}

} // namespace detail

// lhs = |G'(x) - g'(x)|;
// rhs = delta^-1 sum_{u in {x-delta,x,x+delta}} |G(u)-g(u)| + C+ + C-
inline std::pair<double, double> convex_derivative_gap_bound(const C1Function& G,
                                                             const C1Function& g, double x,
                                                             double delta) {
    check_arg(delta > 0, "convex_derivative_gap_bound: delta must be positive");
    detail::require_convex_near(G, x, delta, "G");
    detail::require_convex_near(g, x, delta, "g");
    const double lhs = std::fabs(G.df(x) - g.df(x));
    const double c_plus = g.df(x + delta) - g.df(x);
    const double c_minus = g.df(x) - g.df(x - delta);
    double rhs = c_plus + c_minus;
    for (double u : {x - delta, x, x + delta}) rhs += std::fabs(G.f(u) - g.f(u)) / delta;
    return {lhs, rhs};
}

} // namespace gibbslab
