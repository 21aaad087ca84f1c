#pragma once

#include "errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>

namespace latentsearch {

struct AdamParams {
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd params;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t t = 0;
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState fresh(Eigen::VectorXd params, const AdamParams& hyper = {})
    {
        const Eigen::Index n = params.size();
        return {std::move(params), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0,
                hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps};
    }

    /// Keep the moments, restart from a new point.
    void reset_moments()
    {
        m.setZero();
        v.setZero();
        t = 0;
    }
};

/// One bias-corrected Adam step on `state.params` along `grad` (descent).
inline void adam_step(AdamState& state, const Eigen::VectorXd& grad)
{
    if (grad.size() != state.params.size())
        throw ShapeError("gradient length does not match the Adam parameters");
    if (!grad.allFinite())
        throw NumericError("non-finite gradient at Adam step " + std::to_string(state.t + 1));

    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        state.params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

} // namespace latentsearch
