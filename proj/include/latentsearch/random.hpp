#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>
#include <type_traits>

namespace latentsearch {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t hash = 14695981039346656037ULL) noexcept
{
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

namespace detail {

constexpr std::uint64_t mix_part(std::uint64_t state, std::uint64_t value) noexcept
{
    return splitmix64(state ^ splitmix64(value));
}

constexpr std::uint64_t mix_part(std::uint64_t state, std::string_view value) noexcept
{
    return splitmix64(state ^ fnv1a64(value));
}

} // namespace detail

/// Stable 64-bit seed derivation. Parts are mixed in order; the result depends
/// only on the values, never on platform or library implementation details.
template <typename... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) noexcept
{
    std::uint64_t state = splitmix64(base);
    ((state = [&] {
         if constexpr (std::is_convertible_v<const Parts&, std::string_view>)
             return detail::mix_part(state, std::string_view(parts));
         else
             return detail::mix_part(state, static_cast<std::uint64_t>(parts));
     }()),
     ...);
    return state;
}

/// Portable pseudorandom stream. mt19937_64 output is fixed by the standard;
/// the conversions to uniform/normal variates are done here rather than through
/// <random> distributions, whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()
                                    - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t r = engine_();
        while (r >= limit)
            r = engine_();
        return r % n;
    }

    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Standard normal conditioned on |x| <= bound (rejection sampling).
    double truncated_normal(double bound)
    {
        for (;;) {
            const double x = normal();
            if (std::abs(x) <= bound)
                return x;
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace latentsearch
