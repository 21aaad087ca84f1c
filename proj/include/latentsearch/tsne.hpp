#pragma once

#include "errors.hpp"
#include "features.hpp"
#include "random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace latentsearch {

/// Exact (O(N^2)) t-SNE settings. Defaults follow the reference implementation:
/// early exaggeration 12 for 250 iterations, learning rate 200, momentum
/// 0.5 -> 0.8 at iteration 250, delta-bar-delta gains.
struct TsneConfig {
    double perplexity = 40.0;
    std::uint64_t iterations = 1000;
    double early_exaggeration = 12.0;
    std::uint64_t exaggeration_iters = 250;
    double learning_rate = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::uint64_t momentum_switch_iter = 250;
    std::uint64_t seed = 0;
    double init_stddev = 1e-4;
    double min_gain = 0.01;
    /// KL(P||Q) is recorded every `kl_every` iterations and at the last one.
    std::uint64_t kl_every = 50;

    void validate(std::size_t n) const
    {
        if (n < 5)
            throw ConfigError("t-SNE needs at least 5 points, got " + std::to_string(n));
        if (!(perplexity > 1.0) || !(perplexity <= static_cast<double>(n) - 1.0))
            throw ConfigError("t-SNE perplexity must lie in (1, N-1] for N = " + std::to_string(n));
        if (iterations < 1)
            throw ConfigError("t-SNE needs at least one iteration");
        if (!(learning_rate > 0.0))
            throw ConfigError("t-SNE learning rate must be > 0");
    }
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

struct Affinities {
    /// Row-stochastic conditional probabilities p_{j|i}.
    Eigen::MatrixXd conditional;
    /// Symmetrized joint probabilities (P + P^T) / 2N, summing to 1.
    Eigen::MatrixXd joint;
    std::vector<double> row_perplexity;
    std::vector<double> row_beta;
    /// One entry per row whose bisection missed the tolerance.
    std::vector<std::string> warnings;
};

inline Eigen::MatrixXd squared_distances(const std::vector<FeatureVector>& features)
{
    const auto n = static_cast<Eigen::Index>(features.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (features[static_cast<std::size_t>(i)].size() != features[0].size())
            throw ShapeError("feature vectors of different lengths");
        if (!features[static_cast<std::size_t>(i)].values.allFinite())
            throw NumericError("feature vector " + std::to_string(i) + " is not finite");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (features[static_cast<std::size_t>(i)].values - features[static_cast<std::size_t>(j)].values).squaredNorm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

namespace detail {

/// Row distribution at precision beta; returns the perplexity exp(H).
inline double row_distribution(const Eigen::MatrixXd& d, Eigen::Index i, double beta, double d_min,
                               Eigen::Ref<Eigen::RowVectorXd> row)
{
    const Eigen::Index n = d.cols();
    double z = 0.0;
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) {
            row[j] = 0.0;
            continue;
        }
        const double shifted = d(i, j) - d_min;
        const double p = std::exp(-beta * shifted);
        row[j] = p;
        z += p;
        weighted += p * shifted;
    }
    row /= z;
    const double entropy = std::log(z) + beta * weighted / z; // nats
    return std::exp(entropy);
}

} // namespace detail

/// Per-row Gaussian precisions found by bisection so each row's perplexity
/// 2^H (H in bits, equivalently e^H in nats) matches `perplexity` within
/// `tolerance`, followed by symmetrization.
inline Affinities calibrate_affinities(const Eigen::MatrixXd& sq_distances, double perplexity,
                                       double tolerance = 1e-5, int max_steps = 200)
{
    const Eigen::Index n = sq_distances.rows();
    if (n < 3)
        throw ConfigError("affinity calibration needs at least 3 points");
    if (!(perplexity > 1.0) || !(perplexity <= static_cast<double>(n) - 1.0))
        throw ConfigError("perplexity must lie in (1, N-1] for N = " + std::to_string(n));

    Affinities out;
    out.conditional = Eigen::MatrixXd::Zero(n, n);
    out.row_perplexity.resize(static_cast<std::size_t>(n));
    out.row_beta.resize(static_cast<std::size_t>(n));
    Eigen::RowVectorXd row(n);

    for (Eigen::Index i = 0; i < n; ++i) {
        double d_min = std::numeric_limits<double>::infinity();
        double d_mean = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) {
                d_min = std::min(d_min, sq_distances(i, j));
                d_mean += sq_distances(i, j);
            }
        d_mean = d_mean / static_cast<double>(n - 1) - d_min;

        double beta = d_mean > 0.0 ? 1.0 / d_mean : 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double achieved = detail::row_distribution(sq_distances, i, beta, d_min, row);
        for (int step = 0; step < max_steps && std::abs(achieved - perplexity) >= tolerance; ++step) {
            if (achieved > perplexity) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
            } else {
                hi = beta;
                beta = 0.5 * (lo + hi);
            }
            achieved = detail::row_distribution(sq_distances, i, beta, d_min, row);
        }
        if (!(std::abs(achieved - perplexity) < tolerance))
            out.warnings.push_back("row " + std::to_string(i) + ": perplexity " + std::to_string(achieved)
                                   + " after " + std::to_string(max_steps) + " bisection steps (target "
                                   + std::to_string(perplexity) + ")");
        out.conditional.row(i) = row;
        out.row_perplexity[static_cast<std::size_t>(i)] = achieved;
        out.row_beta[static_cast<std::size_t>(i)] = beta;
    }

    out.joint = (out.conditional + out.conditional.transpose()) / (2.0 * static_cast<double>(n));
    out.joint /= out.joint.sum();
    return out;
}

inline Affinities calibrate_affinities(const std::vector<FeatureVector>& features, double perplexity)
{
    return calibrate_affinities(squared_distances(features), perplexity);
}

/// KL(P || Q) for the Student-t similarities Q of the embedding.
inline double kl_divergence(const Eigen::MatrixXd& joint, const std::vector<Point2>& points)
{
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd num(n, n);
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        num(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = points[static_cast<std::size_t>(i)];
            const auto& b = points[static_cast<std::size_t>(j)];
            const double q = 1.0 / (1.0 + (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
            num(i, j) = q;
            num(j, i) = q;
            z += 2.0 * q;
        }
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double p = joint(i, j);
            if (i != j && p > 0.0)
                kl += p * std::log(p / std::max(num(i, j) / z, 1e-300));
        }
    return kl;
}

struct TsneResult {
    std::vector<Point2> points;
    /// (iteration, KL) pairs, iteration counted from 1.
    std::vector<std::pair<std::uint64_t, double>> kl_trace;
    std::vector<std::string> warnings;

    double kl_at(std::uint64_t iteration) const
    {
        for (const auto& [it, kl] : kl_trace)
            if (it == iteration)
                return kl;
        throw ConfigError("no KL recorded at iteration " + std::to_string(iteration));
    }
};

/// Gradient descent on KL(P||Q) from calibrated affinities.
inline TsneResult tsne_run(const Affinities& affinities, const TsneConfig& cfg)
{
    const Eigen::MatrixXd& joint = affinities.joint;
    const auto n = static_cast<Eigen::Index>(joint.rows());
    cfg.validate(static_cast<std::size_t>(n));

    TsneResult result;
    result.warnings = affinities.warnings;
    Rng rng(cfg.seed);
    Eigen::MatrixXd y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = cfg.init_stddev * rng.normal();
        y(i, 1) = cfg.init_stddev * rng.normal();
    }
    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    Eigen::MatrixXd grad(n, 2);
    Eigen::MatrixXd num(n, n);

    auto to_points = [&] {
        std::vector<Point2> pts(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            pts[static_cast<std::size_t>(i)] = {y(i, 0), y(i, 1)};
        return pts;
    };

    for (std::uint64_t it = 1; it <= cfg.iterations; ++it) {
        const double exaggeration = it <= cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = it <= cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;

        double z = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = q;
                num(j, i) = q;
                z += 2.0 * q;
            }
        }
        grad.setZero();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double q = num(i, j);
                const double coeff = 4.0 * (exaggeration * joint(i, j) - std::max(q / z, 1e-12)) * q;
                const double fx = coeff * (y(i, 0) - y(j, 0));
                const double fy = coeff * (y(i, 1) - y(j, 1));
                grad(i, 0) += fx;
                grad(i, 1) += fy;
                grad(j, 0) -= fx;
                grad(j, 1) -= fy;
            }

        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index k = 0; k < 2; ++k) {
                const bool same_sign = (grad(i, k) > 0.0) == (update(i, k) > 0.0);
                gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, cfg.min_gain);
                update(i, k) = momentum * update(i, k) - cfg.learning_rate * gains(i, k) * grad(i, k);
            }
        y += update;
        y.rowwise() -= y.colwise().mean();

        if (!y.allFinite())
            throw NumericError("t-SNE diverged at iteration " + std::to_string(it));
        if ((cfg.kl_every > 0 && it % cfg.kl_every == 0) || it == cfg.iterations)
            result.kl_trace.emplace_back(it, kl_divergence(joint, to_points()));
    }
    result.points = to_points();
    return result;
}

inline TsneResult tsne_run(const std::vector<FeatureVector>& features, const TsneConfig& cfg)
{
    cfg.validate(features.size());
    return tsne_run(calibrate_affinities(features, cfg.perplexity), cfg);
}

inline std::vector<Point2> tsne_embed(const std::vector<FeatureVector>& features, const TsneConfig& cfg)
{
    return tsne_run(features, cfg).points;
}

} // namespace latentsearch
