#pragma once

#include "errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>

namespace latentsearch {

/// Central differences, one coordinate at a time.
inline Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double step)
{
    if (!(step > 0.0))
        throw ConfigError("finite-difference step must be > 0");
    Eigen::VectorXd grad(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double up = f(probe);
        probe[i] = x[i] - step;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

struct GradientComparison {
    double max_relative_error = 0.0;
    Eigen::Index worst_index = -1;
};

/// Per-coordinate |a - b| / max(|a|, |b|, floor). The floor keeps coordinates
/// whose true value is zero from dividing rounding noise by zero.
inline GradientComparison compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                            double floor)
{
    if (analytic.size() != numeric.size())
        throw ShapeError("gradient lengths differ");
    GradientComparison result;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        const double err = std::abs(analytic[i] - numeric[i]) / scale;
        if (err > result.max_relative_error || result.worst_index < 0) {
            result.max_relative_error = err;
            result.worst_index = i;
        }
    }
    return result;
}

} // namespace latentsearch
