#pragma once

// Estimators for the quantities the concentration theorems are about:
// multioverlaps, thermal and quenched variances, decoupling statistics,
// perturbation energies, free-entropy variances, the perturbation-strength
// gap, and the Brascamp-Lieb checker.
//
// Products of thermal means are always debiased through disjoint replica
// blocks, and squares of quenched means through independent disorder halves;
// plug-in squares are never used.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gibbslab/oracle.hpp"
#include "gibbslab/sampler.hpp"
#include "gibbslab/stats.hpp"

namespace gibbslab {

inline double pow_int(double x, int p) {
    double r = 1;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
}

struct MultioverlapIndex {
    std::vector<int> powers; // k_1..k_n

    MultioverlapIndex() = default;
    MultioverlapIndex(std::initializer_list<int> k) : powers(k) { validate(); }
    explicit MultioverlapIndex(std::vector<int> k) : powers(std::move(k)) { validate(); }

    int n() const { return static_cast<int>(powers.size()); }
    double norm_sq() const {
        double s = 0;
        for (int k : powers) s += static_cast<double>(k) * k;
        return s;
    }
    void validate() const {
        check_arg(!powers.empty(), "MultioverlapIndex: need n >= 1");
        for (int k : powers) check_arg(k >= 1, "MultioverlapIndex: powers must be >= 1");
    }
    std::string dashed() const {
        std::string s;
        for (size_t i = 0; i < powers.size(); ++i) {
            if (i) s += "-";
            s += std::to_string(powers[i]);
        }
        return s;
    }
};

// R^(k) = N^-1 sum_i prod_l (sigma_i^l)^{k_l} over n replicas
inline double multioverlap(std::span<const std::span<const double>> replicas,
                           const MultioverlapIndex& k) {
    check_arg(replicas.size() >= static_cast<size_t>(k.n()),
              "multioverlap: block smaller than the replica count of k");
    const size_t N = replicas[0].size();
    double acc = 0;
    for (size_t i = 0; i < N; ++i) {
        double prod = 1;
        for (int l = 0; l < k.n(); ++l) prod *= pow_int(replicas[l][i], k.powers[l]);
        acc += prod;
    }
    return acc / static_cast<double>(N);
}

namespace detail {

// R^(k) from the first n replicas of one block at one stored sample index
inline double block_overlap(const ReplicaEnsemble& ens, int block, int time,
                            const MultioverlapIndex& k) {
    const int base = block * ens.block_size;
    const size_t N = ens.disorder->N;
    double acc = 0;
    for (size_t i = 0; i < N; ++i) {
        double prod = 1;
        for (int l = 0; l < k.n(); ++l)
            prod *= pow_int(ens.replicas[base + l].samples[time][i], k.powers[l]);
        acc += prod;
    }
    return acc / static_cast<double>(N);
}

inline double batch_boot_stderr(std::span<const double> series, uint64_t seed,
                                int n_batches = 20, int n_boot = 200) {
    if (series.size() < 4) return 0.0;
    const auto batches = batch_means(series, n_batches);
    if (batches.size() < 2) return 0.0;
    Rng rng(seed);
    return bootstrap_stderr_of_mean(batches, n_boot, rng);
}

} // namespace detail

// --- thermal variance <(R - <R>_0)^2>_0 ---
//
// Unbiased through disjoint blocks: <R^2> from squared single-block values,
// <R>^2 from products across distinct blocks.
inline Estimate thermal_variance(const ReplicaEnsemble& ens, const MultioverlapIndex& k,
                                 uint64_t boot_seed = 0) {
    ens.validate();
    check_arg(ens.block_size >= k.n(), "thermal_variance: block size below replica count of k");
    check_arg(ens.n_blocks() >= 2, "thermal_variance: need at least 2 disjoint blocks");
    const int nb = ens.n_blocks();
    const int T = ens.n_samples();

    std::vector<double> series(T);
    std::vector<double> r_of_block(nb);
    for (int t = 0; t < T; ++t) {
        for (int b = 0; b < nb; ++b) r_of_block[b] = detail::block_overlap(ens, b, t, k);
        double sq_term = 0, cross = 0;
        for (int b = 0; b < nb; ++b) sq_term += sq(r_of_block[b]);
        sq_term /= nb;
        int pairs = 0;
        for (int a = 0; a < nb; ++a)
            for (int b = a + 1; b < nb; ++b) {
                cross += r_of_block[a] * r_of_block[b];
                ++pairs;
            }
        cross /= pairs;
        series[t] = sq_term - cross;
    }

    Estimate est;
    est.value = mean(series);
    est.stderr_ = detail::batch_boot_stderr(
        series, boot_seed ? boot_seed : derive_seed(ens.chain_seed_base, {purpose::bootstrap}));
    est.n_disorder = 1;
    est.n_replica_blocks = nb;
    est.mcmc_steps = ens.total_steps();
    return est;
}

// thermal mean <R^(k)> estimate (all blocks and samples)
inline Estimate overlap_mean(const ReplicaEnsemble& ens, const MultioverlapIndex& k,
                             uint64_t boot_seed = 0) {
    ens.validate();
    check_arg(ens.block_size >= k.n(), "overlap_mean: block size below replica count of k");
    const int nb = ens.n_blocks();
    const int T = ens.n_samples();
    std::vector<double> series(T);
    for (int t = 0; t < T; ++t) {
        double acc = 0;
        for (int b = 0; b < nb; ++b) acc += detail::block_overlap(ens, b, t, k);
        series[t] = acc / nb;
    }
    Estimate est;
    est.value = mean(series);
    est.stderr_ = detail::batch_boot_stderr(
        series, boot_seed ? boot_seed : derive_seed(ens.chain_seed_base, {purpose::bootstrap, 2}));
    est.n_disorder = 1;
    est.n_replica_blocks = nb;
    est.mcmc_steps = ens.total_steps();
    return est;
}

// mean over blocks and samples of R_A(t)^2, an unbiased <R^2> estimate
inline double overlap_square_mean(const ReplicaEnsemble& ens, const MultioverlapIndex& k) {
    const int nb = ens.n_blocks();
    const int T = ens.n_samples();
    double acc = 0;
    for (int t = 0; t < T; ++t)
        for (int b = 0; b < nb; ++b) acc += sq(detail::block_overlap(ens, b, t, k));
    return acc / (static_cast<double>(nb) * T);
}

// --- quenched mean and total variance E<R^2> - (E<R>)^2 ---

struct QuenchedSummary {
    double thermal_mean = 0;  // <R> estimate for one disorder
    double square_mean = 0;   // <R^2> estimate for one disorder
    long mcmc_steps = 0;
    long n_blocks = 0;
};

inline QuenchedSummary quenched_summary(const ReplicaEnsemble& ens, const MultioverlapIndex& k) {
    QuenchedSummary s;
    s.thermal_mean = overlap_mean(ens, k).value;
    s.square_mean = overlap_square_mean(ens, k);
    s.mcmc_steps = ens.total_steps();
    s.n_blocks = ens.n_blocks();
    return s;
}

// (E<R>)^2 debiased with independent disorder halves (even/odd positions).
inline std::pair<Estimate, Estimate> quenched_mean_and_variance_from_summaries(
    std::span<const QuenchedSummary> per_disorder, uint64_t boot_seed, int n_boot = 300) {
    const size_t D = per_disorder.size();
    check_arg(D >= 2, "quenched variance: need at least 2 disorder samples");

    auto compute = [&](std::span<const size_t> idx, double& mean_out, double& var_out) {
        double m = 0, r2 = 0, even = 0, odd = 0;
        size_t n_even = 0, n_odd = 0;
        for (size_t pos = 0; pos < idx.size(); ++pos) {
            const auto& s = per_disorder[idx[pos]];
            m += s.thermal_mean;
            r2 += s.square_mean;
            if (pos % 2 == 0) {
                even += s.thermal_mean;
                ++n_even;
            } else {
                odd += s.thermal_mean;
                ++n_odd;
            }
        }
        m /= idx.size();
        r2 /= idx.size();
        mean_out = m;
        var_out = r2 - (even / n_even) * (odd / std::max<size_t>(n_odd, 1));
    };

    std::vector<size_t> all(D);
    for (size_t i = 0; i < D; ++i) all[i] = i;
    double m0, v0;
    compute(all, m0, v0);

    Rng rng(boot_seed);
    std::vector<double> m_reps(n_boot), v_reps(n_boot);
    std::vector<size_t> idx(D);
    for (int b = 0; b < n_boot; ++b) {
        for (auto& i : idx) i = rng.uniform_int(D);
        compute(idx, m_reps[b], v_reps[b]);
    }

    long steps = 0, blocks = 0;
    for (const auto& s : per_disorder) {
        steps += s.mcmc_steps;
        blocks += s.n_blocks;
    }
    // bootstrap stderr is the sd of the replicates
    Estimate mean_est{m0, std::sqrt(sample_variance(m_reps)), static_cast<long>(D), blocks, steps};
    Estimate var_est{v0, std::sqrt(sample_variance(v_reps)), static_cast<long>(D), blocks, steps};
    return {mean_est, var_est};
}

inline std::pair<Estimate, Estimate> quenched_mean_and_variance(
    std::span<const ReplicaEnsemble> ensembles, const MultioverlapIndex& k,
    uint64_t boot_seed = 1) {
    check_arg(ensembles.size() >= 2, "quenched variance: need at least 2 disorder samples");
    std::vector<QuenchedSummary> summaries;
    summaries.reserve(ensembles.size());
    for (const auto& e : ensembles) summaries.push_back(quenched_summary(e, k));
    return quenched_mean_and_variance_from_summaries(summaries, boot_seed);
}

// --- decoupling statistics (thermal and quenched corollaries) ---

enum class HTag { Identity, Square, AffineHalf, Tanh2 };

inline double h_eval(HTag tag, double x) {
    switch (tag) {
        case HTag::Identity: return x;
        case HTag::Square: return x * x;
        case HTag::AffineHalf: return 0.5 * (x + 1.0);
        case HTag::Tanh2: return std::tanh(2.0 * x);
    }
    return 0;
}

inline HTag h_tag_from_string(const std::string& s) {
    if (s == "identity") return HTag::Identity;
    if (s == "square") return HTag::Square;
    if (s == "affine_half") return HTag::AffineHalf;
    if (s == "tanh2") return HTag::Tanh2;
    throw std::invalid_argument("unknown h tag '" + s + "'");
}

inline std::string h_tag_name(HTag t) {
    switch (t) {
        case HTag::Identity: return "identity";
        case HTag::Square: return "square";
        case HTag::AffineHalf: return "affine_half";
        case HTag::Tanh2: return "tanh2";
    }
    return "?";
}

// <prod_j h_j(sigma_{i_j})>_0 - prod_j <h_j(sigma_{i_j})>_0 for one disorder;
// the product of means uses one disjoint replica block per factor.
inline Estimate decorrelation_thermal(const ReplicaEnsemble& ens, std::span<const HTag> hs,
                                      std::span<const int> sites, uint64_t boot_seed = 0) {
    ens.validate();
    const int kk = static_cast<int>(hs.size());
    check_arg(hs.size() == sites.size(), "decorrelation: h list and site list differ in length");
    for (size_t a = 0; a < sites.size(); ++a) {
        check_arg(sites[a] >= 0 && sites[a] < ens.disorder->N, "decorrelation: site out of range");
        for (size_t b = a + 1; b < sites.size(); ++b)
            check_arg(sites[a] != sites[b], "decorrelation: repeated sites");
    }
    check_arg(ens.n_blocks() >= kk, "decorrelation: need one disjoint block per h factor");

    const int T = ens.n_samples();
    const int R = static_cast<int>(ens.replicas.size());
    std::vector<double> series(T);
    for (int t = 0; t < T; ++t) {
        double joint = 0;
        for (int r = 0; r < R; ++r) {
            double prod = 1;
            for (int j = 0; j < kk; ++j)
                prod *= h_eval(hs[j], ens.replicas[r].samples[t][sites[j]]);
            joint += prod;
        }
        joint /= R;
        double prod_means;
        if (kk == 1) {
            prod_means = joint; // empty product correction: statistic is exactly 0
        } else {
            prod_means = 1;
            for (int j = 0; j < kk; ++j) {
                double m = 0;
                for (int l = 0; l < ens.block_size; ++l)
                    m += h_eval(hs[j],
                                ens.replicas[j * ens.block_size + l].samples[t][sites[j]]);
                prod_means *= m / ens.block_size;
            }
        }
        series[t] = joint - prod_means;
    }
    Estimate est;
    est.value = mean(series);
    est.stderr_ = detail::batch_boot_stderr(
        series, boot_seed ? boot_seed : derive_seed(ens.chain_seed_base, {purpose::bootstrap, 3}));
    est.n_disorder = 1;
    est.n_replica_blocks = ens.n_blocks();
    est.mcmc_steps = ens.total_steps();
    return est;
}

struct DecouplingSummary {
    double joint = 0;                // <prod_j h_j(sigma_{i_j})> estimate
    std::vector<double> factor_means; // <h_j(sigma_{i_j})> estimates
    long mcmc_steps = 0;
};

inline DecouplingSummary decoupling_summary(const ReplicaEnsemble& ens, std::span<const HTag> hs,
                                            std::span<const int> sites) {
    const int T = ens.n_samples();
    const int R = static_cast<int>(ens.replicas.size());
    const int kk = static_cast<int>(hs.size());
    DecouplingSummary s;
    s.factor_means.assign(kk, 0.0);
    for (int t = 0; t < T; ++t)
        for (int r = 0; r < R; ++r) {
            double prod = 1;
            for (int j = 0; j < kk; ++j) {
                const double v = h_eval(hs[j], ens.replicas[r].samples[t][sites[j]]);
                prod *= v;
                s.factor_means[j] += v;
            }
            s.joint += prod;
        }
    const double norm = static_cast<double>(T) * R;
    s.joint /= norm;
    for (auto& f : s.factor_means) f /= norm;
    s.mcmc_steps = ens.total_steps();
    return s;
}

// E<prod_j h_j(sigma_j)>_0 - prod_j E<h_j(sigma_j)>_0; the product of
// quenched means uses k disjoint disorder groups (round robin).
inline Estimate decorrelation_quenched_from_summaries(
    std::span<const DecouplingSummary> per_disorder, int kk, uint64_t boot_seed,
    int n_boot = 300) {
    const size_t D = per_disorder.size();
    check_arg(D >= static_cast<size_t>(std::max(2, kk)),
              "decorrelation quenched: need at least one disorder group per factor");

    auto compute = [&](std::span<const size_t> idx) {
        double joint = 0;
        std::vector<double> group_mean(kk, 0.0);
        std::vector<long> group_n(kk, 0);
        for (size_t pos = 0; pos < idx.size(); ++pos) {
            const auto& s = per_disorder[idx[pos]];
            joint += s.joint;
            const int g = static_cast<int>(pos % kk);
            group_mean[g] += s.factor_means[g];
            ++group_n[g];
        }
        joint /= idx.size();
        if (kk == 1) return 0.0; // empty product correction
        double prod = 1;
        for (int g = 0; g < kk; ++g) prod *= group_mean[g] / std::max<long>(group_n[g], 1);
        return joint - prod;
    };

    std::vector<size_t> all(D);
    for (size_t i = 0; i < D; ++i) all[i] = i;
    const double v0 = compute(all);
    Rng rng(boot_seed);
    std::vector<double> reps(n_boot);
    std::vector<size_t> idx(D);
    for (int b = 0; b < n_boot; ++b) {
        for (auto& i : idx) i = rng.uniform_int(D);
        reps[b] = compute(idx);
    }
    long steps = 0;
    for (const auto& s : per_disorder) steps += s.mcmc_steps;
    return Estimate{v0, std::sqrt(sample_variance(reps)), static_cast<long>(D), 0, steps};
}

inline Estimate decorrelation_quenched(std::span<const ReplicaEnsemble> ensembles,
                                       std::span<const HTag> hs, std::span<const int> sites,
                                       uint64_t boot_seed = 1) {
    std::vector<DecouplingSummary> summaries;
    summaries.reserve(ensembles.size());
    for (const auto& e : ensembles) summaries.push_back(decoupling_summary(e, hs, sites));
    return decorrelation_quenched_from_summaries(summaries, static_cast<int>(hs.size()),
                                                 boot_seed);
}

// --- perturbation energy observable E_I(sigma) (site-indexed form) ---

inline double perturbation_energy_observable(std::span<const double> sigma,
                                             const PerturbationState& state,
                                             const PerturbationIndex& I) {
    check_arg(static_cast<int>(sigma.size()) == state.N,
              "perturbation_energy_observable: dimension mismatch");
    const int pos = state.find_index(I);
    check_arg(pos >= 0, "perturbation_energy_observable: index not retained in the truncation");
    double acc = 0;
    for (const auto& [site, count] : state.counts[pos])
        acc += static_cast<double>(count) * poly_P(I, sigma[site]);
    return acc;
}

// --- energy concentration statistic E_lambda E<|E_I - E<E_I>|> ---

struct EnergyConcentrationResult {
    Estimate stat;
    double sqrt_2s = 0; // reference scale from the thermal-fluctuation bound
};

struct EnergyConcentrationSummary {
    std::vector<double> draws; // raw E_I values over replicas and samples
    double mean_draw = 0;
    double s_N = 0;
    long mcmc_steps = 0;
};

inline EnergyConcentrationSummary energy_concentration_summary(const ReplicaEnsemble& ens,
                                                               const PerturbationIndex& I) {
    check_arg(ens.disorder->has_pert, "energy_concentration: ensemble lacks a perturbation");
    EnergyConcentrationSummary s;
    for (const auto& r : ens.replicas)
        for (const auto& x : r.samples)
            s.draws.push_back(perturbation_energy_observable(x, ens.disorder->pert, I));
    s.mean_draw = mean(s.draws);
    s.s_N = ens.disorder->pert.s_N;
    s.mcmc_steps = ens.total_steps();
    return s;
}

inline EnergyConcentrationResult energy_concentration_from_summaries(
    std::span<const EnergyConcentrationSummary> per_disorder, uint64_t boot_seed) {
    const size_t D = per_disorder.size();
    check_arg(D >= 2, "energy_concentration: need at least 2 disorder samples");

    auto compute = [&](std::span<const size_t> idx) {
        double center = 0;
        for (size_t i : idx) center += per_disorder[i].mean_draw;
        center /= idx.size();
        double acc = 0;
        for (size_t i : idx) {
            double a = 0;
            for (double e : per_disorder[i].draws) a += std::fabs(e - center);
            acc += a / per_disorder[i].draws.size();
        }
        return acc / idx.size();
    };

    // leave-one-out centers for the point estimate kill the O(1/D) bias
    double v0 = 0;
    for (size_t d = 0; d < D; ++d) {
        double center = 0;
        for (size_t o = 0; o < D; ++o)
            if (o != d) center += per_disorder[o].mean_draw;
        center /= (D - 1);
        double a = 0;
        for (double e : per_disorder[d].draws) a += std::fabs(e - center);
        v0 += a / per_disorder[d].draws.size();
    }
    v0 /= D;

    Rng rng(boot_seed);
    std::vector<double> reps(300);
    std::vector<size_t> idx(D);
    for (auto& rep : reps) {
        for (auto& i : idx) i = rng.uniform_int(D);
        rep = compute(idx);
    }
    long steps = 0;
    for (const auto& s : per_disorder) steps += s.mcmc_steps;
    EnergyConcentrationResult out;
    out.stat = Estimate{v0, std::sqrt(sample_variance(reps)), static_cast<long>(D), 0, steps};
    out.sqrt_2s = std::sqrt(2.0 * per_disorder[0].s_N);
    return out;
}

inline EnergyConcentrationResult energy_concentration_statistic(
    std::span<const ReplicaEnsemble> ensembles, const PerturbationIndex& I,
    uint64_t boot_seed = 1) {
    std::vector<EnergyConcentrationSummary> summaries;
    summaries.reserve(ensembles.size());
    for (const auto& e : ensembles) summaries.push_back(energy_concentration_summary(e, I));
    return energy_concentration_from_summaries(summaries, boot_seed);
}

// --- free entropy variance across disorder ---

enum class VTag { None, ConstS, SR1 };

inline VTag v_tag_from_string(const std::string& s) {
    if (s == "none") return VTag::None;
    if (s == "const_s") return VTag::ConstS;
    if (s == "s_r1") return VTag::SR1;
    throw std::invalid_argument("unknown V tag '" + s + "'");
}

inline std::string v_tag_name(VTag t) {
    switch (t) {
        case VTag::None: return "none";
        case VTag::ConstS: return "const_s";
        case VTag::SR1: return "s_r1";
    }
    return "?";
}

// F^{(V)} = ln int exp(H' + V); V from the bounded dictionary
// {0, s_N, s_N R^(1)}, all separable.
inline double free_entropy_with_v(const DisorderSample& d, double eps, VTag tag, double s_N) {
    check_arg(d.model->separable(), "free_entropy_with_v: unsupported model (need separable)");
    const double t = d.has_pert ? d.pert.t : 0.0;
    const double slope = (tag == VTag::SR1) ? s_N / d.N : 0.0;
    double acc = (tag == VTag::ConstS) ? s_N : 0.0;
    for (int i = 0; i < d.N; ++i) {
        const auto base = site_total_potential(d, eps, i, t);
        acc += log_partition_1d([&](double x) { return base(x) + slope * x; }, 1e-11);
    }
    return acc;
}

struct FreeEntropyVarianceResult {
    std::vector<std::pair<VTag, Estimate>> per_tag;
    Estimate max_over_dictionary; // lower bound of the supremum over V
};

inline FreeEntropyVarianceResult free_entropy_variance(std::span<const DisorderSample> disorders,
                                                       double eps, double s_N,
                                                       std::span<const VTag> tags,
                                                       uint64_t boot_seed = 1) {
    const size_t D = disorders.size();
    check_arg(D >= 2, "free_entropy_variance: need at least 2 disorder samples");
    FreeEntropyVarianceResult out;
    Estimate best;
    for (VTag tag : tags) {
        std::vector<double> f(D);
        for (size_t d = 0; d < D; ++d) f[d] = free_entropy_with_v(disorders[d], eps, tag, s_N);
        const double v = sample_variance(f);
        Rng rng(fold_seed(boot_seed, static_cast<uint64_t>(tag)));
        const double se = bootstrap_stderr(
            D, 300, rng, [&](std::span<const size_t> idx) {
                std::vector<double> sub;
                sub.reserve(idx.size());
                for (size_t i : idx) sub.push_back(f[i]);
                return sample_variance(sub);
            });
        Estimate est{v, se, static_cast<long>(D), 0, 0};
        out.per_tag.emplace_back(tag, est);
        if (est.value >= best.value) best = est;
    }
    out.max_over_dictionary = best;
    return out;
}

// --- perturbation gap E|<R>_{t=1} - <R>_{t=0}| with common random numbers ---

struct GapResult {
    Estimate stat;
    double rate = 0; // (s_N/N)^{1/6} reference
};

inline GapResult mean_gap_from_values(std::span<const double> abs_gaps, double s_N, double N,
                                      uint64_t boot_seed) {
    check_arg(!abs_gaps.empty(), "mean_gap: no gap values");
    Rng rng(boot_seed);
    GapResult out;
    out.stat = Estimate{mean(abs_gaps),
                        abs_gaps.size() >= 2
                            ? bootstrap_stderr_of_mean(abs_gaps, 300, rng)
                            : 0.0,
                        static_cast<long>(abs_gaps.size()), 0, 0};
    out.rate = std::pow(s_N / N, 1.0 / 6.0);
    return out;
}

inline GapResult mean_gap_perturbed_vs_unperturbed(std::span<const ReplicaEnsemble> at_t1,
                                                   std::span<const ReplicaEnsemble> at_t0,
                                                   const MultioverlapIndex& k,
                                                   uint64_t boot_seed = 1) {
    check_arg(at_t1.size() == at_t0.size() && !at_t1.empty(),
              "mean_gap: need paired ensembles at t=1 and t=0");
    const size_t D = at_t1.size();
    std::vector<double> gaps(D);
    double s_N = 0, n_val = 1;
    long steps = 0, blocks = 0;
    for (size_t d = 0; d < D; ++d) {
        check_arg(at_t1[d].disorder.get() == at_t0[d].disorder.get(),
                  "mean_gap: mismatched disorder between the t=1 and t=0 ensembles");
        check_arg(at_t1[d].chain_seed_base == at_t0[d].chain_seed_base,
                  "mean_gap: ensembles do not share chain seeds (need common random numbers)");
        gaps[d] = std::fabs(overlap_mean(at_t1[d], k).value - overlap_mean(at_t0[d], k).value);
        s_N = at_t1[d].disorder->has_pert ? at_t1[d].disorder->pert.s_N : 0.0;
        n_val = at_t1[d].disorder->N;
        steps += at_t1[d].total_steps() + at_t0[d].total_steps();
        blocks += at_t1[d].n_blocks();
    }
    Rng rng(boot_seed);
    GapResult out;
    out.stat = Estimate{mean(gaps),
                        D >= 2 ? bootstrap_stderr_of_mean(gaps, 300, rng) : 0.0,
                        static_cast<long>(D), blocks, steps};
    out.rate = std::pow(s_N / n_val, 1.0 / 6.0);
    return out;
}

// --- Brascamp-Lieb checker: Var g <= (1/eps) E |grad g|^2 ---

struct BLObservable {
    int n_replicas = 1;
    std::function<double(std::span<const double>)> value;          // flat replica-major input
    std::function<void(std::span<const double>, std::span<double>)> gradient;
    std::string name;
};

// g = R^(k) as a function on the n-replica product space; the paper's own
// gradient bound gives |grad R|^2 <= sum k_l^2 / N.
inline BLObservable bl_multioverlap_observable(const MultioverlapIndex& k, int N) {
    BLObservable g;
    g.n_replicas = k.n();
    g.name = "R^(" + k.dashed() + ")";
    const auto powers = k.powers;
    g.value = [powers, N](std::span<const double> flat) {
        const int n = static_cast<int>(powers.size());
        double acc = 0;
        for (int i = 0; i < N; ++i) {
            double prod = 1;
            for (int l = 0; l < n; ++l) prod *= pow_int(flat[l * N + i], powers[l]);
            acc += prod;
        }
        return acc / N;
    };
    g.gradient = [powers, N](std::span<const double> flat, std::span<double> out) {
        const int n = static_cast<int>(powers.size());
        for (int l = 0; l < n; ++l)
            for (int i = 0; i < N; ++i) {
                double prod = powers[l] * pow_int(flat[l * N + i], powers[l] - 1);
                for (int mrep = 0; mrep < n; ++mrep)
                    if (mrep != l) prod *= pow_int(flat[mrep * N + i], powers[mrep]);
                out[l * N + i] = prod / N;
            }
    };
    return g;
}

struct BrascampLiebResult {
    double variance = 0;
    double variance_stderr = 0;
    double bound = 0;
    double bound_stderr = 0;
    double eps_certified = 0;
    bool holds_within_3sigma = false;
};

inline BrascampLiebResult brascamp_lieb_check(const ReplicaEnsemble& ens, const BLObservable& g,
                                              uint64_t boot_seed = 0) {
    ens.validate();
    const double eps_cert = -total_hessian_upper_bound(*ens.disorder, ens.eps);
    check_arg(eps_cert > 0, "brascamp_lieb_check: concavity is not certified (eps <= 0)");
    const int n = g.n_replicas;
    check_arg(ens.block_size >= n, "brascamp_lieb_check: block size below the observable arity");
    check_arg(ens.n_blocks() >= 2, "brascamp_lieb_check: need at least 2 blocks");

    const int nb = ens.n_blocks();
    const int T = ens.n_samples();
    const int N = ens.disorder->N;
    std::vector<double> flat(n * N), grad(n * N);
    std::vector<double> var_series(T), bound_series(T);
    std::vector<double> gv(nb);
    for (int t = 0; t < T; ++t) {
        double grad_acc = 0;
        for (int b = 0; b < nb; ++b) {
            for (int l = 0; l < n; ++l) {
                const auto& s = ens.replicas[b * ens.block_size + l].samples[t];
                std::copy(s.begin(), s.end(), flat.begin() + l * N);
            }
            gv[b] = g.value(flat);
            g.gradient(flat, grad);
            grad_acc += norm2_squared(grad);
        }
        double sq_term = 0, cross = 0;
        int pairs = 0;
        for (int b = 0; b < nb; ++b) sq_term += sq(gv[b]);
        sq_term /= nb;
        for (int a = 0; a < nb; ++a)
            for (int b = a + 1; b < nb; ++b) {
                cross += gv[a] * gv[b];
                ++pairs;
            }
        cross /= pairs;
        var_series[t] = sq_term - cross;
        bound_series[t] = grad_acc / nb / eps_cert;
    }

    BrascampLiebResult out;
    out.eps_certified = eps_cert;
    out.variance = mean(var_series);
    out.bound = mean(bound_series);
    const uint64_t seed =
        boot_seed ? boot_seed : derive_seed(ens.chain_seed_base, {purpose::bootstrap, 4});
    out.variance_stderr = detail::batch_boot_stderr(var_series, seed);
    out.bound_stderr = detail::batch_boot_stderr(bound_series, fold_seed(seed, 1));
    const double slack = 3.0 * std::sqrt(sq(out.variance_stderr) + sq(out.bound_stderr));
    out.holds_within_3sigma = out.variance <= out.bound + slack;
    return out;
}

} // namespace gibbslab
