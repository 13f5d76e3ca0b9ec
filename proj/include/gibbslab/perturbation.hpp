#pragma once

// Dyadic index set, perturbation polynomials, and the site-indexed Poisson
// perturbation of the Hamiltonian, plus the Gaussian (ridge) regularization.
//
// An index I = (i_0,...,i_{m-1}) with i_p >= p stands for the dyadic tuple
// (2^{-i_0},...,2^{-i_{m-1}}). Exponents are stored as integers so set
// membership never depends on floating-point identity. The associated
// polynomial is
//     P_I(x) = 2^{-iota(I)-2m} * sum_p 2^{-i_p} (x+1)^p,
// convex and non-decreasing on [-1,1] with values in (0,1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gibbslab/common.hpp"
#include "gibbslab/rng.hpp"

namespace gibbslab {

struct PerturbationIndex {
    std::vector<int> exponents; // i_0,...,i_{m-1}

    PerturbationIndex() = default;
    explicit PerturbationIndex(std::vector<int> e) : exponents(std::move(e)) { validate(); }
    PerturbationIndex(std::initializer_list<int> e) : exponents(e) { validate(); }

    int order() const { return static_cast<int>(exponents.size()); } // m

    void validate() const {
        check_arg(!exponents.empty(), "PerturbationIndex: m must be >= 1");
        for (size_t p = 0; p < exponents.size(); ++p)
            check_arg(exponents[p] >= static_cast<int>(p),
                      "PerturbationIndex: exponent i_p must be >= p");
    }

    bool operator==(const PerturbationIndex& o) const { return exponents == o.exponents; }
    bool operator<(const PerturbationIndex& o) const {
        if (exponents.size() != o.exponents.size()) return exponents.size() < o.exponents.size();
        return exponents < o.exponents;
    }

    std::string to_string() const {
        std::string s = "(";
        for (size_t p = 0; p < exponents.size(); ++p) {
            if (p) s += ",";
            s += std::to_string(exponents[p]);
        }
        return s + ")";
    }
};

inline long iota_weight(const PerturbationIndex& I) {
    long s = 0;
    for (int e : I.exponents) s += e;
    return s;
}

inline double poly_P(const PerturbationIndex& I, double x) {
    check_domain(std::fabs(x) <= 1.0 + 1e-15, "poly_P: x outside [-1,1]");
    const int m = I.order();
    const double scale = std::ldexp(1.0, -static_cast<int>(iota_weight(I)) - 2 * m);
    double acc = 0, xp = 1.0;
    for (int p = 0; p < m; ++p) {
        acc += std::ldexp(1.0, -I.exponents[p]) * xp;
        xp *= (x + 1.0);
    }
    return scale * acc;
}

inline double poly_P_derivative(const PerturbationIndex& I, double x) {
    check_domain(std::fabs(x) <= 1.0 + 1e-15, "poly_P_derivative: x outside [-1,1]");
    const int m = I.order();
    const double scale = std::ldexp(1.0, -static_cast<int>(iota_weight(I)) - 2 * m);
    double acc = 0, xp = 1.0;
    for (int p = 1; p < m; ++p) {
        acc += p * std::ldexp(1.0, -I.exponents[p]) * xp;
        xp *= (x + 1.0);
    }
    return scale * acc;
}

// Retain {I : m <= max_order, iota(I) <= max_iota}; the excluded tail has an
// analytically summable energy contribution reported alongside the state.
struct TruncationPolicy {
    int max_order = 3; // M_max
    int max_iota = 8;  // K_max

    void validate() const {
        check_arg(max_order >= 1, "TruncationPolicy: max_order must be >= 1");
        check_arg(max_iota >= 0, "TruncationPolicy: max_iota must be >= 0");
    }
};

namespace detail {

inline void enumerate_rec(int m, int pos, long iota_left, std::vector<int>& cur,
                          std::vector<PerturbationIndex>& out) {
    if (pos == m) {
        out.push_back(PerturbationIndex(cur));
        return;
    }
    for (int e = pos; e <= iota_left; ++e) {
        cur[pos] = e;
        enumerate_rec(m, pos + 1, iota_left - e, cur, out);
    }
}

} // namespace detail

// Canonical order: m ascending, then exponents lexicographic.
inline std::vector<PerturbationIndex> enumerate_truncation(const TruncationPolicy& policy) {
    policy.validate();
    std::vector<PerturbationIndex> out;
    for (int m = 1; m <= policy.max_order; ++m) {
        // smallest possible iota for order m is 0+1+...+(m-1)
        if (static_cast<long>(m) * (m - 1) / 2 > policy.max_iota) break;
        std::vector<int> cur(m);
        detail::enumerate_rec(m, 0, policy.max_iota, cur, out);
    }
    return out;
}

// weight(I) = 2^{-iota(I)-2m} * m bounds max_x P_I(x); summed over all of the
// index set it converges (geometric in iota within each order).
inline double index_weight(const PerturbationIndex& I) {
    const int m = I.order();
    return m * std::ldexp(1.0, -static_cast<int>(iota_weight(I)) - 2 * m);
}

// sum over all I of given order m: m * 2^{-m(m+1)/2} (closed form).
inline double order_weight_total(int m) {
    return m * std::ldexp(1.0, -static_cast<int>(m) * (m + 1) / 2);
}

// t * s_N * sum of weights over the excluded part of the index set.
inline double truncation_tail_bound(const TruncationPolicy& policy, double s_N, double t) {
    policy.validate();
    double tail = 0;
    const auto retained = enumerate_truncation(policy);
    std::vector<double> retained_per_order(policy.max_order + 1, 0.0);
    for (const auto& I : retained) retained_per_order[I.order()] += index_weight(I);
    for (int m = 1; m <= policy.max_order; ++m)
        tail += order_weight_total(m) - retained_per_order[m];
    for (int m = policy.max_order + 1;; ++m) {
        const double w = order_weight_total(m);
        if (w < 1e-300) break;
        tail += w;
    }
    return t * s_N * std::max(0.0, tail);
}

// Frozen randomness of the Poisson perturbation in site-indexed form:
// counts pi_{I,i} ~ Poisson(s_N/N) per retained index and site, lambdas
// uniform in [1/2,1]. Immutable once sampled; per-site polynomial
// coefficients are cached so energy evaluation is O(max_order) per site.
struct PerturbationState {
    int N = 0;
    double s_N = 0;
    double t = 0;
    TruncationPolicy policy;
    std::vector<PerturbationIndex> truncation;
    std::vector<double> lambdas;                            // one per retained index
    std::vector<std::vector<std::pair<int, long>>> counts;  // per index: sparse (site, count)
    double tail_bound = 0;

    // site_coef[i][p]: coefficient of (x+1)^p in sum_I lambda_I pi_{I,i} P_I
    std::vector<std::vector<double>> site_coef;

    void rebuild_site_coefficients() {
        const int deg = policy.max_order;
        site_coef.assign(N, std::vector<double>(deg, 0.0));
        for (size_t a = 0; a < truncation.size(); ++a) {
            const auto& I = truncation[a];
            const int m = I.order();
            const double scale =
                lambdas[a] * std::ldexp(1.0, -static_cast<int>(iota_weight(I)) - 2 * m);
            for (const auto& [site, c] : counts[a]) {
                for (int p = 0; p < m; ++p)
                    site_coef[site][p] += c * scale * std::ldexp(1.0, -I.exponents[p]);
            }
        }
    }

    // sum_I lambda_I pi_{I,i} P_I(x) for site i (strength t NOT applied)
    double site_polynomial(int i, double x) const {
        double acc = 0, xp = 1.0;
        for (double c : site_coef[i]) {
            acc += c * xp;
            xp *= (x + 1.0);
        }
        return acc;
    }

    double site_polynomial_derivative(int i, double x) const {
        double acc = 0, xp = 1.0;
        const auto& coef = site_coef[i];
        for (size_t p = 1; p < coef.size(); ++p) {
            acc += p * coef[p] * xp;
            xp *= (x + 1.0);
        }
        return acc;
    }

    long count_for(size_t index_pos, int site) const {
        for (const auto& [s, c] : counts[index_pos])
            if (s == site) return c;
        return 0;
    }

    int find_index(const PerturbationIndex& I) const {
        for (size_t a = 0; a < truncation.size(); ++a)
            if (truncation[a] == I) return static_cast<int>(a);
        return -1;
    }

    PerturbationState with_strength(double new_t) const {
        check_arg(new_t >= 0.0 && new_t <= 1.0, "with_strength: t must be in [0,1]");
        PerturbationState s = *this;
        s.t = new_t;
        s.tail_bound = truncation_tail_bound(s.policy, s.s_N, new_t);
        return s;
    }

    void validate() const {
        check_arg(N >= 1, "PerturbationState: N must be >= 1");
        check_arg(s_N >= 0, "PerturbationState: s_N must be non-negative");
        check_arg(t >= 0.0 && t <= 1.0, "PerturbationState: t must be in [0,1]");
        check_arg(truncation.size() == lambdas.size() && truncation.size() == counts.size(),
                  "PerturbationState: inconsistent array sizes");
        for (double l : lambdas)
            check_arg(l >= 0.5 && l <= 1.0, "PerturbationState: lambda outside [1/2,1]");
        for (size_t a = 0; a < truncation.size(); ++a) {
            truncation[a].validate();
            for (size_t b = a + 1; b < truncation.size(); ++b)
                check_arg(!(truncation[a] == truncation[b]),
                          "PerturbationState: duplicate index in truncation");
        }
    }
};

inline PerturbationState sample_perturbation(int N, double s_N, double t,
                                             const TruncationPolicy& policy, Rng& rng) {
    check_arg(N >= 1, "sample_perturbation: N must be >= 1");
    check_arg(s_N >= 0, "sample_perturbation: s_N must be non-negative");
    check_arg(s_N <= N, "sample_perturbation: s_N must satisfy s_N <= N");
    check_arg(t >= 0.0 && t <= 1.0, "sample_perturbation: t must be in [0,1]");
    policy.validate();

    PerturbationState state;
    state.N = N;
    state.s_N = s_N;
    state.t = t;
    state.policy = policy;
    state.truncation = enumerate_truncation(policy);
    state.lambdas.reserve(state.truncation.size());
    state.counts.resize(state.truncation.size());
    const double site_mean = s_N / N;
    for (size_t a = 0; a < state.truncation.size(); ++a) {
        state.lambdas.push_back(rng.uniform(0.5, 1.0));
        for (int i = 0; i < N; ++i) {
            const long c = rng.poisson(site_mean);
            if (c > 0) state.counts[a].emplace_back(i, c);
        }
    }
    state.tail_bound = truncation_tail_bound(policy, s_N, t);
    state.rebuild_site_coefficients();
    return state;
}

// Eq.-(4)-style ridge term: -(eps/2)|sigma|^2.
inline double gaussian_regularization_energy(std::span<const double> sigma, double eps) {
    return -0.5 * eps * norm2_squared(sigma);
}

// -t sum_I lambda_I sum_i pi_{I,i} P_I(sigma_i); finite by construction.
inline double poisson_perturbation_energy(std::span<const double> sigma,
                                          const PerturbationState& state) {
    check_arg(static_cast<int>(sigma.size()) == state.N,
              "poisson_perturbation_energy: dimension mismatch");
    if (state.t == 0.0) return 0.0;
    double acc = 0;
    for (int i = 0; i < state.N; ++i) acc += state.site_polynomial(i, sigma[i]);
    return -state.t * acc;
}

inline void poisson_perturbation_gradient(std::span<const double> sigma,
                                          const PerturbationState& state,
                                          std::span<double> grad_out) {
    check_arg(static_cast<int>(sigma.size()) == state.N && grad_out.size() == sigma.size(),
              "poisson_perturbation_gradient: dimension mismatch");
    for (int i = 0; i < state.N; ++i)
        grad_out[i] = -state.t * state.site_polynomial_derivative(i, sigma[i]);
}

// U-indexed form of the perturbation (counts pi_I ~ Poisson(s_N), sites
// uniform in [N]); kept only to test distributional equality with the
// site-indexed form.
struct UFormPerturbation {
    double t = 1.0;
    std::vector<PerturbationIndex> truncation;
    std::vector<double> lambdas;
    std::vector<std::vector<int>> sites; // per index: U_1..U_{pi_I}
};

inline UFormPerturbation sample_perturbation_u_form(int N, double s_N, double t,
                                                    const TruncationPolicy& policy, Rng& rng) {
    check_arg(N >= 1 && s_N >= 0 && s_N <= N, "sample_perturbation_u_form: bad N or s_N");
    UFormPerturbation u;
    u.t = t;
    u.truncation = enumerate_truncation(policy);
    u.sites.resize(u.truncation.size());
    for (size_t a = 0; a < u.truncation.size(); ++a) {
        u.lambdas.push_back(rng.uniform(0.5, 1.0));
        const long n = rng.poisson(s_N);
        u.sites[a].reserve(n);
        for (long j = 0; j < n; ++j)
            u.sites[a].push_back(static_cast<int>(rng.uniform_int(N)));
    }
    return u;
}

inline double u_form_energy(std::span<const double> sigma, const UFormPerturbation& u) {
    double acc = 0;
    for (size_t a = 0; a < u.truncation.size(); ++a) {
        double term = 0;
        for (int site : u.sites[a]) term += poly_P(u.truncation[a], sigma[site]);
        acc += u.lambdas[a] * term;
    }
    return -u.t * acc;
}

// --- serialization (structured text records) ---

inline void to_json(nlohmann::json& j, const PerturbationIndex& I) { j = I.exponents; }
inline void from_json(const nlohmann::json& j, PerturbationIndex& I) {
    I.exponents = j.get<std::vector<int>>();
    I.validate();
}

inline void to_json(nlohmann::json& j, const PerturbationState& s) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& per_index : s.counts) {
        nlohmann::json c = nlohmann::json::array();
        for (const auto& [site, n] : per_index) c.push_back({site, n});
        counts.push_back(c);
    }
    j = nlohmann::json{{"N", s.N},
                       {"s_N", s.s_N},
                       {"t", s.t},
                       {"max_order", s.policy.max_order},
                       {"max_iota", s.policy.max_iota},
                       {"truncation", s.truncation},
                       {"lambdas", s.lambdas},
                       {"counts", counts},
                       {"tail_bound", s.tail_bound}};
}

inline void from_json(const nlohmann::json& j, PerturbationState& s) {
    s.N = j.at("N").get<int>();
    s.s_N = j.at("s_N").get<double>();
    s.t = j.at("t").get<double>();
    s.policy.max_order = j.at("max_order").get<int>();
    s.policy.max_iota = j.at("max_iota").get<int>();
    s.truncation = j.at("truncation").get<std::vector<PerturbationIndex>>();
    s.lambdas = j.at("lambdas").get<std::vector<double>>();
    s.counts.clear();
    for (const auto& per_index : j.at("counts")) {
        std::vector<std::pair<int, long>> v;
        for (const auto& e : per_index) v.emplace_back(e.at(0).get<int>(), e.at(1).get<long>());
        s.counts.push_back(std::move(v));
    }
    s.tail_bound = j.at("tail_bound").get<double>();
    s.validate();
    s.rebuild_site_coefficients();
}

} // namespace gibbslab
