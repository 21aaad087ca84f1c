#pragma once

#include "finite_diff.hpp"
#include "latent.hpp"
#include "objective.hpp"
#include "random.hpp"
#include "toy_models.hpp"

#include <memory>
#include <string>
#include <vector>

namespace latentsearch {

/// One toy pipeline configuration whose analytic gradient is checked.
struct GradcheckCase {
    std::string name;
    ToyGeneratorConfig generator;
    ToyEncoderConfig encoder;
    CutoutPolicy cutouts;
};

struct GradcheckResult {
    std::string name;
    std::vector<double> probe_errors; // max relative error per probe
    double max_relative_error = 0.0;
    bool passed = false;
};

inline std::vector<GradcheckCase> default_gradcheck_cases()
{
    GradcheckCase standard{"default", {}, {}, {}};

    GradcheckCase full_frame = standard;
    full_frame.name = "full-frame-single-cut";
    full_frame.cutouts.num_cuts = 1;
    full_frame.cutouts.min_fraction = 1.0;

    GradcheckCase small = standard;
    small.name = "small-windows-upsampled";
    small.generator.shape = {1, 8};
    small.generator.image_size = 24;
    small.encoder.input_size = 16;
    small.encoder.pool = 1;
    small.cutouts.min_fraction = 0.2;
    small.cutouts.max_fraction = 0.5;
    small.cutouts.resize_to = 16;

    GradcheckCase deep = standard;
    deep.name = "deep-narrow";
    deep.generator.shape = {5, 4};
    deep.generator.hidden_width = 16;
    deep.generator.input_gain = 2.0;
    deep.cutouts.num_cuts = 4;
    return {standard, full_frame, small, deep};
}

/// Compares the analytic loss gradient with central differences at `probes`
/// random latents (each with its own text target and cut iteration).
inline GradcheckResult run_gradcheck(const GradcheckCase& c, std::size_t probes = 20, std::uint64_t seed = 0,
                                     double step = 1e-5, double tolerance = 1e-4, double floor = 1e-8)
{
    const auto generator = std::make_shared<const ToyGenerator>(c.generator);
    const auto encoder = std::make_shared<const ToyEncoder>(c.encoder);
    GradcheckResult result;
    result.name = c.name;
    for (std::size_t p = 0; p < probes; ++p) {
        const FeatureVector target = toy_text_target(c.name + "/" + std::to_string(p), encoder->feature_dim());
        CutoutPolicy policy = c.cutouts;
        policy.seed_stream = derive_seed(seed, "gradcheck-cuts", p);
        const PipelineObjective objective(generator, encoder, target, policy);
        const LatentShape shape = generator->latent_shape();
        const LatentCode z = new_latent(shape, {InitKind::StandardNormal, 2.0, derive_seed(seed, c.name, p)});
        const Eigen::VectorXd analytic = objective.fitness_and_gradient(z, p).loss_gradient;
        const Eigen::VectorXd numeric = finite_diff_grad(
            [&](const Eigen::VectorXd& x) { return -objective.fitness(unflatten(x, shape), p); }, flatten(z), step);
        const double err = compare_gradients(analytic, numeric, floor).max_relative_error;
        result.probe_errors.push_back(err);
        result.max_relative_error = std::max(result.max_relative_error, err);
    }
    result.passed = result.max_relative_error < tolerance;
    return result;
}

} // namespace latentsearch
