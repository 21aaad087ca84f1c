#pragma once

#include "errors.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace latentsearch {

struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

inline double mean_of(std::span<const double> values)
{
    if (values.empty())
        throw DegenerateInputError("mean of an empty sample");
    double sum = 0.0;
    for (double v : values)
        sum += v;
    return sum / static_cast<double>(values.size());
}

/// Unbiased (n - 1) sample standard deviation.
inline double sample_stddev(std::span<const double> values)
{
    if (values.size() < 2)
        throw DegenerateInputError("sample standard deviation needs at least 2 values");
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

/// Two-sided standard normal quantile for a central `level` interval.
/// 0.95 maps to the conventional 1.96.
inline double normal_critical_value(double level)
{
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError("confidence level must lie in (0, 1)");
    if (level == 0.95)
        return 1.96;
    // Solve erf(z / sqrt 2) = level by bisection.
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::erf(mid / std::sqrt(2.0)) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Normal-approximation interval: mean +- z * s / sqrt(n).
inline Interval confidence_interval(std::span<const double> values, double level = 0.95)
{
    if (values.size() < 2)
        throw DegenerateInputError("a confidence interval needs at least 2 values");
    const double z = normal_critical_value(level);
    return {mean_of(values), z * sample_stddev(values) / std::sqrt(static_cast<double>(values.size()))};
}

} // namespace latentsearch
