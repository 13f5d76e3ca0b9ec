#pragma once

// Conditionally i.i.d. replicas from the Gibbs density of the regularized,
// perturbed model, restricted to the box.
//
// Default kernel: coordinate-wise slice sampling. Every full conditional is a
// 1D log-concave density on [-1,1] (model part quadratic in the coordinate,
// ridge quadratic, perturbation polynomial convex with a minus sign), so the
// stepping-out/shrinkage slice update is exact, needs no tuning, and never
// leaves the box.
//
// Cross-check kernel: reflected Langevin proposals with a Metropolis
// correction; the proposal density folds Gaussian images into the box, and
// the image sum is carried in the acceptance ratio.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gibbslab/models.hpp"
#include "gibbslab/rng.hpp"
#include "gibbslab/stats.hpp"

namespace gibbslab {

enum class McmcAlgorithm { CoordinateSlice, ReflectedLangevin };

struct McmcConfig {
    McmcAlgorithm algorithm = McmcAlgorithm::CoordinateSlice;
    int burnin_sweeps = 10;   // a sweep = N single-coordinate updates
    int thinning_sweeps = 1;  // sweeps between stored samples
    int n_samples = 100;      // stored per replica
    double step_size = 0.25;  // reflected-Langevin only
    int chains_per_replica = 1;

    void validate() const {
        check_arg(burnin_sweeps >= 0, "mcmc: burnin_sweeps must be >= 0");
        check_arg(thinning_sweeps >= 1, "mcmc: thinning_sweeps must be >= 1");
        check_arg(n_samples >= 1, "mcmc: n_samples must be >= 1");
        check_arg(step_size > 0, "mcmc: step_size must be > 0");
        check_arg(chains_per_replica >= 1, "mcmc: chains_per_replica must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const McmcConfig& c) {
    j = nlohmann::json{
        {"algorithm",
         c.algorithm == McmcAlgorithm::CoordinateSlice ? "coordinate-slice"
                                                       : "reflected-langevin-metropolis"},
        {"burnin_sweeps", c.burnin_sweeps},
        {"thinning_sweeps", c.thinning_sweeps},
        {"n_samples", c.n_samples},
        {"step_size", c.step_size},
        {"chains_per_replica", c.chains_per_replica}};
}

inline void from_json(const nlohmann::json& j, McmcConfig& c) {
    const std::string algo = j.value("algorithm", std::string("coordinate-slice"));
    if (algo == "coordinate-slice")
        c.algorithm = McmcAlgorithm::CoordinateSlice;
    else if (algo == "reflected-langevin-metropolis")
        c.algorithm = McmcAlgorithm::ReflectedLangevin;
    else
        throw std::invalid_argument("mcmc: unknown algorithm '" + algo + "'");
    c.burnin_sweeps = j.value("burnin_sweeps", 10);
    c.thinning_sweeps = j.value("thinning_sweeps", 1);
    c.n_samples = j.value("n_samples", 100);
    c.step_size = j.value("step_size", 0.25);
    c.chains_per_replica = j.value("chains_per_replica", 1);
}

struct ReplicaChain {
    std::vector<std::vector<double>> samples; // n_samples x N
    long steps = 0;
    double acceptance_rate = 1.0; // slice always accepts
    uint64_t seed = 0;
};

struct ReplicaEnsemble {
    std::shared_ptr<const DisorderSample> disorder;
    double eps = 0;
    double t = 0; // perturbation strength actually sampled at
    int block_size = 1;
    uint64_t chain_seed_base = 0;
    std::vector<ReplicaChain> replicas;

    int n_blocks() const { return static_cast<int>(replicas.size()) / block_size; }
    int n_samples() const { return replicas.empty() ? 0 : static_cast<int>(replicas[0].samples.size()); }
    long total_steps() const {
        long s = 0;
        for (const auto& r : replicas) s += r.steps;
        return s;
    }

    void validate() const {
        check_arg(disorder != nullptr, "ensemble: missing disorder");
        check_arg(block_size >= 1 && !replicas.empty() &&
                      replicas.size() % static_cast<size_t>(block_size) == 0,
                  "ensemble: replicas must form equal disjoint blocks");
    }
};

namespace detail {

// One exact slice update of a 1D log-concave conditional on [-1,1].
template <typename LogDensity>
double slice_update_1d(double x0, const LogDensity& logf, Rng& rng) {
    const double y = logf(x0) - rng.exponential();
    double w = 0.4;
    double lo = std::max(-1.0, x0 - w * rng.u01());
    double hi = std::min(1.0, lo + w);
    // step out (geometric expansion, clipped to the box)
    while (lo > -1.0 && logf(lo) > y) {
        lo = std::max(-1.0, lo - w);
        w *= 2;
    }
    w = 0.4;
    while (hi < 1.0 && logf(hi) > y) {
        hi = std::min(1.0, hi + w);
        w *= 2;
    }
    // shrink
    for (int iter = 0; iter < 200; ++iter) {
        const double x1 = rng.uniform(lo, hi);
        check_invariant(x1 >= -1.0 && x1 <= 1.0, "slice sampler proposed outside the box");
        if (logf(x1) >= y) return x1;
        if (x1 < x0)
            lo = x1;
        else
            hi = x1;
    }
    return x0;
}

// fold a real line value into [-1,1] by reflections (period-4 accordion)
inline double fold_into_box(double z) {
    double u = z - 4.0 * std::floor((z + 2.0) / 4.0); // in [-2,2)
    if (u > 1.0) return 2.0 - u;
    if (u < -1.0) return -2.0 - u;
    return u;
}

// log of the folded Gaussian proposal density at y given center mu; the
// preimages of y under folding are {y+4k} and {2-y+4k}.
inline double log_folded_gaussian(double y, double mu, double tau) {
    double acc = 0;
    for (int k = -3; k <= 3; ++k) {
        const double z1 = y + 4.0 * k, z2 = 2.0 - y + 4.0 * k;
        acc += std::exp(-sq(z1 - mu) / (2 * tau * tau));
        acc += std::exp(-sq(z2 - mu) / (2 * tau * tau));
    }
    return std::log(acc); // common normalization cancels in the MH ratio
}

} // namespace detail

// Single-coordinate conditional of the full Hamiltonian.
class SiteConditional {
public:
    SiteConditional(const DisorderSample& d, double eps, double t) : d_(d), eps_(eps), t_(t) {}

    double operator()(int i, double x, const CoordQuad& quad) const {
        double phi = (quad.a2 - 0.5 * eps_) * x * x + quad.a1 * x;
        if (d_.has_pert && t_ > 0) phi -= t_ * d_.pert.site_polynomial(i, x);
        return phi;
    }

private:
    const DisorderSample& d_;
    double eps_;
    double t_;
};

inline ReplicaChain run_chain(const DisorderSample& d, double eps, double t,
                              const McmcConfig& config, uint64_t seed) {
    const int N = d.N;
    ReplicaChain chain;
    chain.seed = seed;
    chain.samples.reserve(config.n_samples);

    // Randomness is drawn from a fresh substream per (sweep, coordinate) so
    // that chains sharing a seed stay coupled positionally even when their
    // targets differ (common random numbers across perturbation strengths).
    std::vector<double> sigma(N);
    {
        Rng init = Rng::from_path(seed, {purpose::chain_init});
        for (auto& x : sigma) x = init.uniform(-1.0, 1.0);
    }
    check_domain(std::isfinite(total_energy_t(d, sigma, eps, t)),
                 "run_chain: non-finite energy at the initial point");

    if (config.algorithm == McmcAlgorithm::CoordinateSlice) {
        auto scratch = d.model->make_scratch(sigma);
        const SiteConditional cond(d, eps, t);
        uint64_t sweep_idx = 0;
        auto sweep = [&] {
            const uint64_t sweep_key = fold_seed(seed, ++sweep_idx);
            for (int i = 0; i < N; ++i) {
                Rng sub(fold_seed(sweep_key, static_cast<uint64_t>(i)));
                const CoordQuad quad = d.model->coord_quad(i, sigma, scratch.get());
                auto logf = [&](double x) { return cond(i, x, quad); };
                const double old_x = sigma[i];
                const double new_x = detail::slice_update_1d(old_x, logf, sub);
                if (new_x != old_x) {
                    d.model->scratch_update(i, old_x, new_x, scratch.get());
                    sigma[i] = new_x;
                }
                ++chain.steps;
            }
        };
        for (int s = 0; s < config.burnin_sweeps; ++s) sweep();
        for (int k = 0; k < config.n_samples; ++k) {
            for (int s = 0; s < config.thinning_sweeps; ++s) sweep();
            chain.samples.push_back(sigma);
        }
        chain.acceptance_rate = 1.0;
        return chain;
    }

    // reflected Langevin with Metropolis correction; one step counts as one sweep
    long accepted = 0, proposals = 0;
    const double tau = config.step_size;
    std::vector<double> grad(N), mu(N), prop(N), mu_rev(N), grad_prop(N);
    double e_cur = total_energy_t(d, sigma, eps, t);
    total_gradient_t(d, sigma, eps, t, grad);
    uint64_t step_idx = 0;
    auto step = [&] {
        ++proposals;
        ++chain.steps;
        Rng sub(fold_seed(seed, ++step_idx));
        if (tau <= 0) return; // degenerate config: chain cannot move
        for (int i = 0; i < N; ++i) mu[i] = sigma[i] + 0.5 * tau * tau * grad[i];
        double log_q_fwd = 0;
        for (int i = 0; i < N; ++i) {
            prop[i] = detail::fold_into_box(mu[i] + tau * sub.normal());
            log_q_fwd += detail::log_folded_gaussian(prop[i], mu[i], tau);
        }
        const double e_prop = total_energy_t(d, prop, eps, t);
        total_gradient_t(d, prop, eps, t, grad_prop);
        for (int i = 0; i < N; ++i) mu_rev[i] = prop[i] + 0.5 * tau * tau * grad_prop[i];
        double log_q_rev = 0;
        for (int i = 0; i < N; ++i)
            log_q_rev += detail::log_folded_gaussian(sigma[i], mu_rev[i], tau);
        const double log_alpha = e_prop - e_cur + log_q_rev - log_q_fwd;
        if (std::log(sub.u01_pos()) < log_alpha) {
            sigma = prop;
            grad = grad_prop;
            e_cur = e_prop;
            ++accepted;
        }
    };
    for (int s = 0; s < config.burnin_sweeps; ++s) step();
    for (int k = 0; k < config.n_samples; ++k) {
        for (int s = 0; s < config.thinning_sweeps; ++s) step();
        chain.samples.push_back(sigma);
    }
    chain.acceptance_rate = proposals ? static_cast<double>(accepted) / proposals : 0.0;
    return chain;
}

// Independent chains targeting the same conditional Gibbs measure; seeds are
// split from chain_seed_base per replica, never shared.
inline ReplicaEnsemble sample_replicas(std::shared_ptr<const DisorderSample> disorder, double eps,
                                       double t, int n_replicas, int block_size,
                                       const McmcConfig& config, uint64_t chain_seed_base) {
    config.validate();
    check_arg(n_replicas >= 1, "sample_replicas: need at least one replica");
    check_arg(block_size >= 1 && n_replicas % block_size == 0,
              "sample_replicas: replicas must form equal disjoint blocks");
    check_arg(t >= 0.0 && t <= 1.0, "sample_replicas: t must be in [0,1]");

    ReplicaEnsemble ens;
    ens.disorder = std::move(disorder);
    ens.eps = eps;
    ens.t = t;
    ens.block_size = block_size;
    ens.chain_seed_base = chain_seed_base;
    ens.replicas.reserve(n_replicas);
    for (int r = 0; r < n_replicas; ++r) {
        const uint64_t seed = fold_seed(chain_seed_base, static_cast<uint64_t>(r));
        ens.replicas.push_back(run_chain(*ens.disorder, eps, t, config, seed));
    }
    ens.validate();
    return ens;
}

// --- convergence diagnostics ---

struct DiagnosticsReport {
    std::vector<double> rhat; // per coordinate, split-chain
    std::vector<double> ess;  // per coordinate
    double max_rhat = 0;
    double min_ess = 0;
    bool degenerate = false;
    bool failed = false;
    std::string detail;
};

// Split-chain potential scale reduction and effective sample size. The ESS
// pass is quadratic in the chain length; bulk callers can skip it.
inline DiagnosticsReport diagnostics(const ReplicaEnsemble& ens, bool with_ess = true) {
    check_arg(ens.replicas.size() >= 2, "diagnostics: need at least 2 chains");
    const int T = ens.n_samples();
    check_arg(T >= 4, "diagnostics: too few samples per chain");
    const int N = ens.disorder->N;
    const int half = T / 2;
    const int m = 2 * static_cast<int>(ens.replicas.size());

    DiagnosticsReport rep;
    rep.rhat.resize(N);
    rep.ess.resize(N);

    for (const auto& chain : ens.replicas) {
        if (chain.acceptance_rate < 0.01) {
            rep.failed = true;
            rep.detail = "chain acceptance rate below 1%";
        }
    }

    std::vector<std::vector<double>> halves(m);
    for (int c = 0; c < N; ++c) {
        for (size_t r = 0; r < ens.replicas.size(); ++r) {
            auto& h0 = halves[2 * r];
            auto& h1 = halves[2 * r + 1];
            h0.resize(half);
            h1.resize(half);
            for (int s = 0; s < half; ++s) h0[s] = ens.replicas[r].samples[s][c];
            for (int s = 0; s < half; ++s) h1[s] = ens.replicas[r].samples[half + s][c];
        }
        double w = 0, b_means_var = 0;
        std::vector<double> means(m);
        for (int j = 0; j < m; ++j) {
            means[j] = mean(halves[j]);
            w += sample_variance(halves[j]);
        }
        w /= m;
        const double grand = mean(means);
        for (int j = 0; j < m; ++j) b_means_var += sq(means[j] - grand);
        b_means_var /= (m - 1);

        if (w < 1e-300) {
            rep.degenerate = true;
            rep.rhat[c] = std::numeric_limits<double>::quiet_NaN();
            rep.ess[c] = 0;
            continue;
        }
        const double var_plus = (half - 1.0) / half * w + b_means_var;
        rep.rhat[c] = std::sqrt(var_plus / w);

        if (!with_ess) {
            rep.ess[c] = 0;
            continue;
        }
        // ESS from pooled autocorrelations (Geyer initial positive pairs)
        double tau = 1.0;
        {
            std::vector<double> rho(half, 0.0);
            for (int lag = 1; lag < half; ++lag) {
                double acov = 0;
                for (int j = 0; j < m; ++j) {
                    double a = 0;
                    for (int s = 0; s + lag < half; ++s)
                        a += (halves[j][s] - means[j]) * (halves[j][s + lag] - means[j]);
                    acov += a / (half - lag);
                }
                acov /= m;
                rho[lag] = 1.0 - (w - acov) / var_plus;
            }
            for (int lag = 1; lag + 1 < half; lag += 2) {
                const double pair = rho[lag] + rho[lag + 1];
                if (pair < 0) break;
                tau += 2.0 * pair;
            }
        }
        rep.ess[c] = m * half / std::max(tau, 1e-12);
    }

    double max_r = 0, min_e = INFINITY;
    for (int c = 0; c < N; ++c) {
        if (!std::isnan(rep.rhat[c])) max_r = std::max(max_r, rep.rhat[c]);
        min_e = std::min(min_e, rep.ess[c]);
    }
    rep.max_rhat = max_r;
    rep.min_ess = std::isfinite(min_e) ? min_e : 0;
    if (rep.degenerate) {
        rep.failed = true;
        if (rep.detail.empty()) rep.detail = "degenerate chain (zero within-chain variance)";
    } else if (rep.max_rhat > 1.05) {
        rep.failed = true;
        if (rep.detail.empty()) rep.detail = "potential scale reduction factor above 1.05";
    }
    return rep;
}

// --- checkpointing ---

inline void to_json(nlohmann::json& j, const ReplicaEnsemble& e) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : e.replicas)
        reps.push_back({{"samples", r.samples},
                        {"steps", r.steps},
                        {"acceptance_rate", r.acceptance_rate},
                        {"seed", r.seed}});
    j = nlohmann::json{{"disorder", serialize_disorder(*e.disorder)},
                       {"eps", e.eps},
                       {"t", e.t},
                       {"block_size", e.block_size},
                       {"chain_seed_base", e.chain_seed_base},
                       {"replicas", reps}};
}

inline ReplicaEnsemble ensemble_from_json(const nlohmann::json& j) {
    ReplicaEnsemble e;
    e.disorder = std::make_shared<DisorderSample>(replay_disorder(j.at("disorder")));
    e.eps = j.at("eps").get<double>();
    e.t = j.at("t").get<double>();
    e.block_size = j.at("block_size").get<int>();
    e.chain_seed_base = j.at("chain_seed_base").get<uint64_t>();
    for (const auto& rj : j.at("replicas")) {
        ReplicaChain r;
        r.samples = rj.at("samples").get<std::vector<std::vector<double>>>();
        r.steps = rj.at("steps").get<long>();
        r.acceptance_rate = rj.at("acceptance_rate").get<double>();
        r.seed = rj.at("seed").get<uint64_t>();
        e.replicas.push_back(std::move(r));
    }
    e.validate();
    return e;
}

} // namespace gibbslab
