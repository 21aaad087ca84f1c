#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace latentsearch {

/// Random square windows scored against the target.
///
/// For each cut, a side fraction f is drawn uniformly from
/// [min_fraction, max_fraction]; side = max(1, round(f * min(width, height))).
/// The top-left corner is uniform over the valid positions, except along an
/// axis where the window spans the whole short side and the long side is
/// longer: there the window is centred. Every cut is resized to
/// resize_to x resize_to with corner-aligned bilinear sampling.
struct CutoutPolicy {
    int num_cuts = 8;
    double min_fraction = 0.4;
    double max_fraction = 1.0;
    int resize_to = 64;
    std::uint64_t seed_stream = 0;

    void validate() const
    {
        if (num_cuts < 1)
            throw ConfigError("num_cuts must be >= 1");
        if (!(min_fraction > 0.0) || !(max_fraction <= 1.0) || !(min_fraction <= max_fraction))
            throw ConfigError("cut fractions must satisfy 0 < min <= max <= 1");
        if (resize_to < 1)
            throw ConfigError("resize_to must be >= 1");
    }
};

/// Largest centred square of the image.
inline Window full_frame_window(int width, int height)
{
    const int side = std::min(width, height);
    return {(width - side) / 2, (height - side) / 2, side};
}

inline std::vector<Window> sample_windows(const CutoutPolicy& policy, int width, int height,
                                          std::uint64_t iteration)
{
    policy.validate();
    if (width < 1 || height < 1)
        throw ShapeError("image dimensions must be >= 1");
    const int short_side = std::min(width, height);
    Rng rng(derive_seed(policy.seed_stream, "cutouts", iteration));
    std::vector<Window> windows;
    windows.reserve(static_cast<std::size_t>(policy.num_cuts));
    for (int k = 0; k < policy.num_cuts; ++k) {
        const double fraction = policy.min_fraction
                                + (policy.max_fraction - policy.min_fraction) * rng.uniform();
        const int side = std::clamp(static_cast<int>(std::lround(fraction * short_side)), 1, short_side);
        auto place = [&](int extent) {
            if (side == short_side && extent > short_side)
                return (extent - side) / 2;
            return static_cast<int>(rng.below(static_cast<std::uint64_t>(extent - side + 1)));
        };
        const int x = place(width);
        const int y = place(height);
        windows.push_back({x, y, side});
    }
    return windows;
}

inline std::vector<ImageTensor> make_cutouts(const ImageTensor& img, const CutoutPolicy& policy,
                                             std::uint64_t iteration)
{
    std::vector<ImageTensor> cuts;
    for (const Window& w : sample_windows(policy, img.width, img.height, iteration))
        cuts.push_back(crop_resize(img, w, policy.resize_to));
    return cuts;
}

} // namespace latentsearch
