#pragma once

// Concrete concave, exchangeable-in-distribution random Hamiltonians on the
// box [-1,1]^N, combined with the Gaussian regularization and the Poisson
// perturbation into the full energy used by sampler, oracle and estimators.
//
// Three families:
//   random_field   separable, H(sigma) = sum h_i sigma_i, Hessian = 0
//   quadratic      H(sigma) = -1/2 sigma'A sigma + h'sigma, A a random Gram
//                  matrix (Hessian = -A, negative semi-definite)
//   planted_ridge  least-squares fit to y = X sigma* + noise, Hessian
//                  = -X'X / noise^2; ships the ground truth sigma*
//
// Each family exposes exact coordinate conditionals (quadratic in the single
// coordinate) so the slice sampler needs O(1)-ish work per evaluation.

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gibbslab/common.hpp"
#include "gibbslab/perturbation.hpp"
#include "gibbslab/rng.hpp"

namespace gibbslab {

struct SpinConfiguration {
    std::vector<double> values;

    SpinConfiguration() = default;
    explicit SpinConfiguration(std::vector<double> v) : values(std::move(v)) { validate(); }

    int size() const { return static_cast<int>(values.size()); }
    void validate() const {
        check_arg(in_box(values), "SpinConfiguration: component outside [-1,1]");
    }
};

// Model part of a single-coordinate conditional potential: a2 x^2 + a1 x.
struct CoordQuad {
    double a2 = 0;
    double a1 = 0;
};

// Per-configuration state a model maintains so coordinate conditionals stay
// cheap during sweeps (e.g. A*sigma for the quadratic family).
struct ModelScratch {
    virtual ~ModelScratch() = default;
};

class HamiltonianModel {
public:
    virtual ~HamiltonianModel() = default;

    virtual int size() const = 0;
    virtual std::string family() const = 0;
    virtual double energy(std::span<const double> sigma) const = 0;
    virtual void gradient(std::span<const double> sigma, std::span<double> out) const = 0;

    // Certified upper bound b <= 0 with Hessian <= b*I everywhere on the box.
    virtual double hessian_upper_eigenvalue_bound() const = 0;

    virtual bool separable() const { return false; }
    virtual double site_potential(int /*i*/, double /*x*/) const {
        throw std::invalid_argument("site_potential: model is not separable");
    }

    virtual std::unique_ptr<ModelScratch> make_scratch(std::span<const double> sigma) const = 0;
    virtual CoordQuad coord_quad(int i, std::span<const double> sigma,
                                 const ModelScratch* scratch) const = 0;
    virtual void scratch_update(int i, double old_x, double new_x,
                                ModelScratch* scratch) const = 0;

    // Same Hamiltonian with coordinates relabelled by perm (disorder permuted
    // along with the spins); used by the exchangeability checks.
    virtual std::shared_ptr<HamiltonianModel> clone_permuted(std::span<const int> perm) const = 0;
};

// --- random field ---

class RandomFieldModel final : public HamiltonianModel {
public:
    explicit RandomFieldModel(std::vector<double> h) : h_(std::move(h)) {}

    int size() const override { return static_cast<int>(h_.size()); }
    std::string family() const override { return "random_field"; }

    double energy(std::span<const double> sigma) const override {
        check_arg(sigma.size() == h_.size(), "random_field: dimension mismatch");
        return dot(h_, sigma);
    }

    void gradient(std::span<const double> sigma, std::span<double> out) const override {
        check_arg(sigma.size() == h_.size() && out.size() == h_.size(),
                  "random_field: dimension mismatch");
        for (size_t i = 0; i < h_.size(); ++i) out[i] = h_[i];
    }

    double hessian_upper_eigenvalue_bound() const override { return 0.0; }
    bool separable() const override { return true; }
    double site_potential(int i, double x) const override { return h_[i] * x; }

    std::unique_ptr<ModelScratch> make_scratch(std::span<const double>) const override {
        return nullptr;
    }
    CoordQuad coord_quad(int i, std::span<const double>, const ModelScratch*) const override {
        return {0.0, h_[i]};
    }
    void scratch_update(int, double, double, ModelScratch*) const override {}

    std::shared_ptr<HamiltonianModel> clone_permuted(std::span<const int> perm) const override {
        std::vector<double> hp(h_.size());
        for (size_t i = 0; i < h_.size(); ++i) hp[i] = h_[perm[i]];
        return std::make_shared<RandomFieldModel>(std::move(hp));
    }

    const std::vector<double>& fields() const { return h_; }

private:
    std::vector<double> h_;
};

// --- quadratic (Gram coupling) ---

class QuadraticModel final : public HamiltonianModel {
public:
    QuadraticModel(Eigen::MatrixXd A, Eigen::VectorXd h) : A_(std::move(A)), h_(std::move(h)) {
        check_arg(A_.rows() == A_.cols() && A_.rows() == h_.size(),
                  "quadratic: inconsistent dimensions");
    }

    int size() const override { return static_cast<int>(h_.size()); }
    std::string family() const override { return "quadratic"; }

    double energy(std::span<const double> sigma) const override {
        check_arg(static_cast<int>(sigma.size()) == size(), "quadratic: dimension mismatch");
        Eigen::Map<const Eigen::VectorXd> s(sigma.data(), sigma.size());
        return -0.5 * s.dot(A_ * s) + h_.dot(s);
    }

    void gradient(std::span<const double> sigma, std::span<double> out) const override {
        check_arg(static_cast<int>(sigma.size()) == size() && out.size() == sigma.size(),
                  "quadratic: dimension mismatch");
        Eigen::Map<const Eigen::VectorXd> s(sigma.data(), sigma.size());
        Eigen::Map<Eigen::VectorXd> g(out.data(), out.size());
        g = -(A_ * s) + h_;
    }

    double hessian_upper_eigenvalue_bound() const override {
        std::call_once(bound_once_, [this] {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A_, Eigen::EigenvaluesOnly);
            const double lmin = es.eigenvalues().minCoeff();
            const double margin = 1e-10 * (1.0 + A_.cwiseAbs().maxCoeff());
            bound_ = -std::max(0.0, lmin - margin);
        });
        return bound_;
    }

    struct Scratch final : ModelScratch {
        Eigen::VectorXd g; // A * sigma
    };

    std::unique_ptr<ModelScratch> make_scratch(std::span<const double> sigma) const override {
        auto s = std::make_unique<Scratch>();
        Eigen::Map<const Eigen::VectorXd> sv(sigma.data(), sigma.size());
        s->g = A_ * sv;
        return s;
    }

    CoordQuad coord_quad(int i, std::span<const double> sigma,
                         const ModelScratch* scratch) const override {
        const auto* s = static_cast<const Scratch*>(scratch);
        const double off = s->g(i) - A_(i, i) * sigma[i];
        return {-0.5 * A_(i, i), h_(i) - off};
    }

    void scratch_update(int i, double old_x, double new_x, ModelScratch* scratch) const override {
        auto* s = static_cast<Scratch*>(scratch);
        s->g += A_.col(i) * (new_x - old_x);
    }

    std::shared_ptr<HamiltonianModel> clone_permuted(std::span<const int> perm) const override {
        const int n = size();
        Eigen::MatrixXd Ap(n, n);
        Eigen::VectorXd hp(n);
        for (int i = 0; i < n; ++i) {
            hp(i) = h_(perm[i]);
            for (int j = 0; j < n; ++j) Ap(i, j) = A_(perm[i], perm[j]);
        }
        return std::make_shared<QuadraticModel>(std::move(Ap), std::move(hp));
    }

    const Eigen::MatrixXd& coupling() const { return A_; }

private:
    Eigen::MatrixXd A_;
    Eigen::VectorXd h_;
    mutable std::once_flag bound_once_;
    mutable double bound_ = 0;
};

// --- planted ridge ---

class PlantedRidgeModel final : public HamiltonianModel {
public:
    PlantedRidgeModel(Eigen::MatrixXd X, Eigen::VectorXd y, double noise_std,
                      std::vector<double> sigma_star)
        : X_(std::move(X)), y_(std::move(y)), nu_(noise_std), sigma_star_(std::move(sigma_star)) {
        check_arg(nu_ > 0, "planted_ridge: noise_std must be positive");
        check_arg(X_.rows() == y_.size() &&
                      X_.cols() == static_cast<long>(sigma_star_.size()),
                  "planted_ridge: inconsistent dimensions");
        col_sq_ = X_.colwise().squaredNorm();
    }

    int size() const override { return static_cast<int>(X_.cols()); }
    std::string family() const override { return "planted_ridge"; }

    double energy(std::span<const double> sigma) const override {
        check_arg(static_cast<int>(sigma.size()) == size(), "planted_ridge: dimension mismatch");
        Eigen::Map<const Eigen::VectorXd> s(sigma.data(), sigma.size());
        return -(y_ - X_ * s).squaredNorm() / (2.0 * nu_ * nu_);
    }

    void gradient(std::span<const double> sigma, std::span<double> out) const override {
        check_arg(static_cast<int>(sigma.size()) == size() && out.size() == sigma.size(),
                  "planted_ridge: dimension mismatch");
        Eigen::Map<const Eigen::VectorXd> s(sigma.data(), sigma.size());
        Eigen::Map<Eigen::VectorXd> g(out.data(), out.size());
        g = X_.transpose() * (y_ - X_ * s) / (nu_ * nu_);
    }

    double hessian_upper_eigenvalue_bound() const override {
        std::call_once(bound_once_, [this] {
            Eigen::MatrixXd gram = X_.transpose() * X_;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
            const double lmin = es.eigenvalues().minCoeff();
            const double margin = 1e-10 * (1.0 + gram.cwiseAbs().maxCoeff());
            bound_ = -std::max(0.0, lmin - margin) / (nu_ * nu_);
        });
        return bound_;
    }

    struct Scratch final : ModelScratch {
        Eigen::VectorXd r; // y - X * sigma
    };

    std::unique_ptr<ModelScratch> make_scratch(std::span<const double> sigma) const override {
        auto s = std::make_unique<Scratch>();
        Eigen::Map<const Eigen::VectorXd> sv(sigma.data(), sigma.size());
        s->r = y_ - X_ * sv;
        return s;
    }

    CoordQuad coord_quad(int i, std::span<const double> sigma,
                         const ModelScratch* scratch) const override {
        const auto* s = static_cast<const Scratch*>(scratch);
        const double cr = X_.col(i).dot(s->r);
        const double inv = 1.0 / (nu_ * nu_);
        return {-0.5 * col_sq_(i) * inv, (cr + col_sq_(i) * sigma[i]) * inv};
    }

    void scratch_update(int i, double old_x, double new_x, ModelScratch* scratch) const override {
        auto* s = static_cast<Scratch*>(scratch);
        s->r -= X_.col(i) * (new_x - old_x);
    }

    std::shared_ptr<HamiltonianModel> clone_permuted(std::span<const int> perm) const override {
        const int n = size();
        Eigen::MatrixXd Xp(X_.rows(), n);
        std::vector<double> sp(n);
        for (int i = 0; i < n; ++i) {
            Xp.col(i) = X_.col(perm[i]);
            sp[i] = sigma_star_[perm[i]];
        }
        return std::make_shared<PlantedRidgeModel>(std::move(Xp), y_, nu_, std::move(sp));
    }

    const std::vector<double>& sigma_star() const { return sigma_star_; }

private:
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    double nu_;
    std::vector<double> sigma_star_;
    Eigen::VectorXd col_sq_;
    mutable std::once_flag bound_once_;
    mutable double bound_ = 0;
};

// --- disorder sample: everything frozen before spins are drawn ---

struct DisorderSample {
    std::string family;
    int N = 0;
    nlohmann::json params;
    uint64_t seed = 0;
    std::shared_ptr<const HamiltonianModel> model;
    bool has_pert = false;
    PerturbationState pert;

    std::optional<std::vector<double>> sigma_star() const {
        if (auto* m = dynamic_cast<const PlantedRidgeModel*>(model.get()))
            return m->sigma_star();
        return std::nullopt;
    }
};

inline DisorderSample make_random_field(int N, double field_std, uint64_t seed) {
    check_arg(N >= 1, "random_field: N must be >= 1");
    check_arg(field_std > 0, "random_field: field_std must be positive");
    Rng rng = Rng::from_path(seed, {purpose::disorder});
    std::vector<double> h(N);
    for (auto& x : h) x = rng.normal(0.0, field_std);
    DisorderSample d;
    d.family = "random_field";
    d.N = N;
    d.params = {{"field_std", field_std}};
    d.seed = seed;
    d.model = std::make_shared<RandomFieldModel>(std::move(h));
    return d;
}

inline DisorderSample make_quadratic(int N, int M, double coupling_scale, uint64_t seed) {
    check_arg(N >= 1 && M >= 1, "quadratic: N and M must be >= 1");
    check_arg(coupling_scale > 0, "quadratic: coupling_scale must be positive");
    Rng rng = Rng::from_path(seed, {purpose::disorder});
    Eigen::MatrixXd G(N, M);
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < N; ++i) G(i, j) = rng.normal();
    Eigen::VectorXd h(N);
    for (int i = 0; i < N; ++i) h(i) = rng.normal();
    Eigen::MatrixXd A = (coupling_scale / M) * (G * G.transpose());
    DisorderSample d;
    d.family = "quadratic";
    d.N = N;
    d.params = {{"M", M}, {"coupling_scale", coupling_scale}};
    d.seed = seed;
    d.model = std::make_shared<QuadraticModel>(std::move(A), std::move(h));
    return d;
}

inline DisorderSample make_planted_ridge(int N, int M, double noise_std, uint64_t seed) {
    check_arg(N >= 1 && M >= 1, "planted_ridge: N and M must be >= 1");
    check_arg(noise_std > 0, "planted_ridge: noise_std must be positive");
    Rng rng = Rng::from_path(seed, {purpose::disorder});
    std::vector<double> sigma_star(N);
    for (auto& x : sigma_star) x = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd X(M, N);
    const double entry_std = 1.0 / std::sqrt(static_cast<double>(N));
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < M; ++i) X(i, j) = rng.normal(0.0, entry_std);
    Eigen::VectorXd z(M);
    for (int i = 0; i < M; ++i) z(i) = rng.normal();
    Eigen::Map<const Eigen::VectorXd> ss(sigma_star.data(), N);
    Eigen::VectorXd y = X * ss + noise_std * z;
    DisorderSample d;
    d.family = "planted_ridge";
    d.N = N;
    d.params = {{"M", M}, {"noise_std", noise_std}};
    d.seed = seed;
    d.model = std::make_shared<PlantedRidgeModel>(std::move(X), std::move(y), noise_std,
                                                  std::move(sigma_star));
    return d;
}

inline void attach_perturbation(DisorderSample& d, double s_N, double t,
                                const TruncationPolicy& policy, uint64_t seed) {
    Rng rng = Rng::from_path(seed, {purpose::perturbation});
    d.pert = sample_perturbation(d.N, s_N, t, policy, rng);
    d.has_pert = true;
}

inline DisorderSample replay_disorder(const nlohmann::json& j) {
    const std::string family = j.at("family").get<std::string>();
    const int N = j.at("N").get<int>();
    const uint64_t seed = j.at("seed").get<uint64_t>();
    const auto& p = j.at("params");
    DisorderSample d;
    if (family == "random_field")
        d = make_random_field(N, p.at("field_std").get<double>(), seed);
    else if (family == "quadratic")
        d = make_quadratic(N, p.at("M").get<int>(), p.at("coupling_scale").get<double>(), seed);
    else if (family == "planted_ridge")
        d = make_planted_ridge(N, p.at("M").get<int>(), p.at("noise_std").get<double>(), seed);
    else
        throw std::invalid_argument("replay_disorder: unknown family '" + family + "'");
    if (j.contains("perturbation")) {
        d.pert = j.at("perturbation").get<PerturbationState>();
        d.has_pert = true;
    }
    return d;
}

inline nlohmann::json serialize_disorder(const DisorderSample& d) {
    nlohmann::json j{{"family", d.family}, {"N", d.N}, {"params", d.params}, {"seed", d.seed}};
    if (d.has_pert) j["perturbation"] = d.pert;
    return j;
}

// --- full Hamiltonian of the perturbed, regularized system ---

// Explicit-strength variants let one disorder sample serve both the t=0 and
// t=1 measures (common random numbers for the perturbation-gap estimator).
inline double total_energy_t(const DisorderSample& d, std::span<const double> sigma, double eps,
                             double t) {
    double e = d.model->energy(sigma) + gaussian_regularization_energy(sigma, eps);
    if (d.has_pert && t > 0) {
        check_arg(static_cast<int>(sigma.size()) == d.pert.N, "total_energy: dimension mismatch");
        double acc = 0;
        for (int i = 0; i < d.pert.N; ++i) acc += d.pert.site_polynomial(i, sigma[i]);
        e -= t * acc;
    }
    return e;
}

inline double total_energy(const DisorderSample& d, std::span<const double> sigma, double eps) {
    return total_energy_t(d, sigma, eps, d.has_pert ? d.pert.t : 0.0);
}

inline void total_gradient_t(const DisorderSample& d, std::span<const double> sigma, double eps,
                             double t, std::span<double> out) {
    d.model->gradient(sigma, out);
    for (size_t i = 0; i < sigma.size(); ++i) out[i] -= eps * sigma[i];
    if (d.has_pert && t > 0) {
        for (size_t i = 0; i < sigma.size(); ++i)
            out[i] -= t * d.pert.site_polynomial_derivative(static_cast<int>(i), sigma[i]);
    }
}

inline void total_gradient(const DisorderSample& d, std::span<const double> sigma, double eps,
                           std::span<double> out) {
    total_gradient_t(d, sigma, eps, d.has_pert ? d.pert.t : 0.0, out);
}

// Perturbation polynomials are convex and enter with a minus sign, so the
// model bound minus eps certifies the whole Hamiltonian.
inline double total_hessian_upper_bound(const DisorderSample& d, double eps) {
    return d.model->hessian_upper_eigenvalue_bound() - eps;
}

inline double planted_overlap(std::span<const double> sigma, std::span<const double> sigma_star) {
    check_arg(sigma.size() == sigma_star.size(), "planted_overlap: length mismatch");
    return dot(sigma, sigma_star) / static_cast<double>(sigma.size());
}

} // namespace gibbslab
