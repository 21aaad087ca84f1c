#pragma once

#include "errors.hpp"
#include "random.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace latentsearch {

/// Cached eigendecomposition C = B diag(d) B^T.
struct EigenCache {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    std::uint64_t computed_at = 0; // generation of the last refresh
    std::uint64_t interval = 1;    // refresh period in generations
};

/// (mu/mu_w, lambda)-CMA-ES state with rank-1 and rank-mu covariance updates.
///
/// Strategy constants (n = dimension):
///   w'_i   = ln(mu + 1/2) - ln i,  w = w' / sum(w'),  mu = floor(lambda / 2)
///   mu_eff = 1 / sum(w_i^2)
///   c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
///   d_sigma = 1 + 2 max(0, sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
///   c_c    = (4 + mu_eff / n) / (n + 4 + 2 mu_eff / n)
///   c_1    = 2 / ((n + 1.3)^2 + mu_eff)
///   c_mu   = min(1 - c_1, 2 (mu_eff - 2 + 1 / mu_eff) / ((n + 2)^2 + mu_eff))
///   chi_N  = sqrt(n) (1 - 1/(4n) + 1/(21 n^2))
/// The eigendecomposition is refreshed every max(1, floor(1 / (10 n (c_1 + c_mu))))
/// generations.
struct CmaState {
    Eigen::VectorXd mean;
    double sigma = 0.2;
    Eigen::MatrixXd C;
    Eigen::VectorXd p_sigma;
    Eigen::VectorXd p_c;
    Eigen::VectorXd weights;
    std::size_t lambda = 10;
    double mu_eff = 0.0;
    double c_sigma = 0.0;
    double d_sigma = 0.0;
    double c_c = 0.0;
    double c_1 = 0.0;
    double c_mu = 0.0;
    double chi_n = 0.0;
    std::uint64_t generation = 0;
    EigenCache eigen;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    std::size_t mu() const noexcept { return static_cast<std::size_t>(weights.size()); }

    friend bool operator==(const CmaState& a, const CmaState& b)
    {
        return a.mean == b.mean && a.sigma == b.sigma && a.C == b.C && a.p_sigma == b.p_sigma
               && a.p_c == b.p_c && a.weights == b.weights && a.lambda == b.lambda
               && a.generation == b.generation && a.eigen.eigenvalues == b.eigen.eigenvalues
               && a.eigen.eigenvectors == b.eigen.eigenvectors && a.eigen.computed_at == b.eigen.computed_at;
    }
};

inline CmaState cma_init(std::size_t dim, const Eigen::VectorXd& mean0, double sigma0, std::size_t lambda)
{
    if (dim < 1)
        throw ConfigError("CMA-ES dimension must be >= 1");
    if (static_cast<std::size_t>(mean0.size()) != dim)
        throw ShapeError("CMA-ES initial mean has the wrong length");
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
        throw ConfigError("CMA-ES sigma0 must be finite and > 0");
    if (lambda < 2)
        throw ConfigError("CMA-ES population size must be >= 2");
    if (!mean0.allFinite())
        throw NumericError("CMA-ES initial mean is not finite");

    const auto n = static_cast<double>(dim);
    const auto di = static_cast<Eigen::Index>(dim);
    CmaState s;
    s.mean = mean0;
    s.sigma = sigma0;
    s.C = Eigen::MatrixXd::Identity(di, di);
    s.p_sigma = Eigen::VectorXd::Zero(di);
    s.p_c = Eigen::VectorXd::Zero(di);
    s.lambda = lambda;

    const std::size_t mu = lambda / 2;
    s.weights.resize(static_cast<Eigen::Index>(mu));
    for (std::size_t i = 0; i < mu; ++i)
        s.weights[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(mu) + 0.5) - std::log(static_cast<double>(i + 1));
    s.weights /= s.weights.sum();
    s.mu_eff = 1.0 / s.weights.squaredNorm();

    s.c_sigma = (s.mu_eff + 2.0) / (n + s.mu_eff + 5.0);
    s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((s.mu_eff - 1.0) / (n + 1.0)) - 1.0) + s.c_sigma;
    s.c_c = (4.0 + s.mu_eff / n) / (n + 4.0 + 2.0 * s.mu_eff / n);
    s.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + s.mu_eff);
    s.c_mu = std::min(1.0 - s.c_1, 2.0 * (s.mu_eff - 2.0 + 1.0 / s.mu_eff) / ((n + 2.0) * (n + 2.0) + s.mu_eff));
    s.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    s.eigen.eigenvalues = Eigen::VectorXd::Ones(di);
    s.eigen.eigenvectors = Eigen::MatrixXd::Identity(di, di);
    s.eigen.computed_at = 0;
    s.eigen.interval = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::floor(1.0 / (10.0 * n * (s.c_1 + s.c_mu)))));
    return s;
}

inline void cma_refresh_eigen(CmaState& state)
{
    // C is kept exactly symmetric by the update; decompose its lower triangle.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(state.C);
    if (solver.info() != Eigen::Success)
        throw NumericError("CMA-ES eigendecomposition failed at generation " + std::to_string(state.generation));
    const Eigen::VectorXd& d = solver.eigenvalues();
    if (!d.allFinite() || !(d.minCoeff() > 0.0))
        throw NumericError("CMA-ES covariance lost positive definiteness at generation "
                           + std::to_string(state.generation) + " (min eigenvalue "
                           + std::to_string(d.minCoeff()) + ")");
    state.eigen.eigenvalues = d;
    state.eigen.eigenvectors = solver.eigenvectors();
    state.eigen.computed_at = state.generation;
}

/// Samples lambda candidates x_i = mean + sigma * B diag(sqrt(d)) z_i.
/// Refreshes a stale eigendecomposition first.
inline std::vector<Eigen::VectorXd> cma_ask(CmaState& state, std::uint64_t seed)
{
    if (state.generation - state.eigen.computed_at >= state.eigen.interval)
        cma_refresh_eigen(state);

    const auto n = static_cast<Eigen::Index>(state.dim());
    const Eigen::VectorXd scale = state.eigen.eigenvalues.cwiseSqrt();
    Rng rng(seed);
    std::vector<Eigen::VectorXd> candidates;
    candidates.reserve(state.lambda);
    Eigen::VectorXd z(n);
    for (std::size_t k = 0; k < state.lambda; ++k) {
        for (Eigen::Index i = 0; i < n; ++i)
            z[i] = rng.normal();
        candidates.push_back(state.mean + state.sigma * (state.eigen.eigenvectors * scale.cwiseProduct(z)));
    }
    return candidates;
}

/// Indices that sort `losses` ascending; equal losses keep input order.
inline std::vector<std::size_t> rank_ascending(const std::vector<double>& losses)
{
    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    return order;
}

/// Updates mean, evolution paths, step size and covariance from ranked candidates.
/// Only the ranking of `losses` is used.
inline void cma_tell(CmaState& state, const std::vector<Eigen::VectorXd>& candidates,
                     const std::vector<double>& losses)
{
    if (candidates.size() != state.lambda || losses.size() != state.lambda)
        throw ShapeError("CMA-ES tell expects " + std::to_string(state.lambda) + " candidates and losses");
    for (std::size_t i = 0; i < losses.size(); ++i)
        if (!std::isfinite(losses[i]))
            throw NumericError("non-finite loss for candidate " + std::to_string(i) + " at generation "
                               + std::to_string(state.generation));
    const auto n = static_cast<Eigen::Index>(state.dim());
    for (const auto& x : candidates)
        if (x.size() != n)
            throw ShapeError("CMA-ES candidate has the wrong length");

    const auto order = rank_ascending(losses);
    const std::size_t mu = state.mu();

    // Selected steps y_i = (x_{i:lambda} - m) / sigma.
    Eigen::MatrixXd steps(n, static_cast<Eigen::Index>(mu));
    for (std::size_t i = 0; i < mu; ++i)
        steps.col(static_cast<Eigen::Index>(i)) = (candidates[order[i]] - state.mean) / state.sigma;
    const Eigen::VectorXd y_w = steps * state.weights;

    state.mean += state.sigma * y_w;

    // C^{-1/2} y_w from the cached decomposition.
    const auto& B = state.eigen.eigenvectors;
    const Eigen::VectorXd inv_sqrt_d = state.eigen.eigenvalues.cwiseSqrt().cwiseInverse();
    const Eigen::VectorXd whitened = B * inv_sqrt_d.cwiseProduct(B.transpose() * y_w);

    state.p_sigma = (1.0 - state.c_sigma) * state.p_sigma
                    + std::sqrt(state.c_sigma * (2.0 - state.c_sigma) * state.mu_eff) * whitened;

    state.generation += 1;
    const double ps_norm = state.p_sigma.norm();
    const double decay = 1.0 - std::pow(1.0 - state.c_sigma, 2.0 * static_cast<double>(state.generation));
    const bool h_sigma = ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (static_cast<double>(n) + 1.0)) * state.chi_n;

    state.p_c = (1.0 - state.c_c) * state.p_c;
    if (h_sigma)
        state.p_c += std::sqrt(state.c_c * (2.0 - state.c_c) * state.mu_eff) * y_w;

    const double delta = h_sigma ? 0.0 : state.c_c * (2.0 - state.c_c);
    const double weight_sum = state.weights.sum();
    Eigen::MatrixXd rank_mu = steps * state.weights.asDiagonal() * steps.transpose();
    state.C = (1.0 - state.c_1 - state.c_mu * weight_sum + state.c_1 * delta) * state.C
              + state.c_1 * (state.p_c * state.p_c.transpose()) + state.c_mu * rank_mu;
    // Mirror the lower triangle so C stays exactly symmetric.
    state.C.triangularView<Eigen::StrictlyUpper>() = state.C.transpose();

    state.sigma *= std::exp((state.c_sigma / state.d_sigma) * (ps_norm / state.chi_n - 1.0));
    if (!std::isfinite(state.sigma) || !(state.sigma > 0.0))
        throw NumericError("CMA-ES step size degenerated at generation " + std::to_string(state.generation));
}

} // namespace latentsearch
