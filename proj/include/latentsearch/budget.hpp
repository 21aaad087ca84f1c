#pragma once

#include "errors.hpp"

#include <cstdint>
#include <string>

namespace latentsearch {

/// Evaluation budget; `used` never exceeds `max_evaluations`.
class Budget {
public:
    explicit Budget(std::uint64_t max_evaluations) : max_(max_evaluations) {}

    std::uint64_t max_evaluations() const noexcept { return max_; }
    std::uint64_t used() const noexcept { return used_; }
    std::uint64_t remaining() const noexcept { return max_ - used_; }
    bool can_afford(std::uint64_t n) const noexcept { return n <= remaining(); }

    void consume(std::uint64_t n = 1)
    {
        if (!can_afford(n))
            throw Error("evaluation budget of " + std::to_string(max_) + " exceeded");
        used_ += n;
    }

private:
    std::uint64_t max_;
    std::uint64_t used_ = 0;
};

} // namespace latentsearch
