#pragma once

#include "cutouts.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "image.hpp"
#include "latent.hpp"
#include "models.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace latentsearch {

struct FitnessGradient {
    double fitness = 0.0;
    /// Gradient of the loss (= -fitness) with respect to the flat latent.
    Eigen::VectorXd loss_gradient;
};

/// Fitness of a latent against a target embedding: mean cosine similarity
/// between the target and the encodings of the cutouts of the generated image.
/// Higher is better; optimizers minimize loss = -fitness.
class Objective {
public:
    virtual ~Objective() = default;

    virtual LatentShape latent_shape() const = 0;
    virtual const CutoutPolicy& cutouts() const = 0;

    virtual double fitness(const LatentCode& latent, std::uint64_t iteration) const = 0;

    virtual bool differentiable() const = 0;
    virtual FitnessGradient fitness_and_gradient(const LatentCode& latent, std::uint64_t iteration) const = 0;

    virtual ImageTensor render(const LatentCode& latent) const = 0;
    /// Embedding of the full-frame window, used for sample-distribution analysis.
    virtual FeatureVector embed(const ImageTensor& image) const = 0;

    virtual std::string generator_identity() const = 0;
    virtual std::string encoder_identity() const = 0;

    /// Same objective with a different cutout seed stream.
    virtual std::unique_ptr<Objective> with_seed_stream(std::uint64_t seed_stream) const = 0;
};

inline double fitness(const LatentCode& latent, const Objective& objective, std::uint64_t iteration)
{
    return objective.fitness(latent, iteration);
}

inline Eigen::VectorXd fitness_gradient(const LatentCode& latent, const Objective& objective,
                                        std::uint64_t iteration)
{
    if (!objective.differentiable())
        throw CapabilityError("objective backend does not provide gradients; use CMA-ES");
    return objective.fitness_and_gradient(latent, iteration).loss_gradient;
}

/// Objective composed from an in-process generator and encoder.
/// Cut scores are summed in window order and divided by the cut count.
class PipelineObjective final : public Objective {
public:
    PipelineObjective(std::shared_ptr<const Generator> generator, std::shared_ptr<const Encoder> encoder,
                      FeatureVector target, CutoutPolicy policy)
        : generator_(std::move(generator)), encoder_(std::move(encoder)), target_(std::move(target)),
          policy_(policy)
    {
        if (!generator_ || !encoder_)
            throw ConfigError("objective needs a generator and an encoder");
        policy_.validate();
        if (target_.size() != encoder_->feature_dim())
            throw ShapeError("target has " + std::to_string(target_.size())
                             + " features, encoder produces " + std::to_string(encoder_->feature_dim()));
        if (!target_.values.allFinite() || !(target_.values.norm() > 0.0))
            throw DegenerateInputError("target feature vector must be finite and nonzero");
        if (encoder_->input_size() != 0 && encoder_->input_size() != policy_.resize_to)
            throw ConfigError("cutout resize_to " + std::to_string(policy_.resize_to)
                              + " does not match encoder input " + std::to_string(encoder_->input_size()));
    }

    LatentShape latent_shape() const override { return generator_->latent_shape(); }
    const CutoutPolicy& cutouts() const override { return policy_; }
    const FeatureVector& target() const noexcept { return target_; }
    const Generator& generator() const noexcept { return *generator_; }
    const Encoder& encoder() const noexcept { return *encoder_; }

    double fitness(const LatentCode& latent, std::uint64_t iteration) const override
    {
        check_shape(latent);
        const ImageTensor image = generator_->generate(latent);
        const auto windows = sample_windows(policy_, image.width, image.height, iteration);
        double sum = 0.0;
        for (const Window& w : windows)
            sum += cosine_similarity(encoder_->encode(crop_resize(image, w, policy_.resize_to)), target_);
        return sum / static_cast<double>(windows.size());
    }

    bool differentiable() const override
    {
        return generator_->differentiable() && encoder_->differentiable();
    }

    FitnessGradient fitness_and_gradient(const LatentCode& latent, std::uint64_t iteration) const override
    {
        if (!differentiable())
            throw CapabilityError("objective backend does not provide gradients; use CMA-ES");
        check_shape(latent);
        const ImageTensor image = generator_->generate(latent);
        const auto windows = sample_windows(policy_, image.width, image.height, iteration);
        const double scale = 1.0 / static_cast<double>(windows.size());

        ImageTensor image_grad = ImageTensor::filled(image.width, image.height, 0.0);
        double sum = 0.0;
        for (const Window& w : windows) {
            const ImageTensor cut = crop_resize(image, w, policy_.resize_to);
            const FeatureVector features = encoder_->encode(cut);
            sum += cosine_similarity(features, target_);
            const Eigen::VectorXd feature_grad = -scale * cosine_similarity_grad(features.values, target_.values);
            crop_resize_adjoint(w, policy_.resize_to, encoder_->pullback(cut, feature_grad), image_grad);
        }
        return {sum * scale, generator_->pullback(latent, image_grad)};
    }

    ImageTensor render(const LatentCode& latent) const override
    {
        check_shape(latent);
        return generator_->generate(latent);
    }

    FeatureVector embed(const ImageTensor& image) const override
    {
        return encoder_->encode(crop_resize(image, full_frame_window(image.width, image.height),
                                            policy_.resize_to));
    }

    std::string generator_identity() const override { return generator_->identity(); }
    std::string encoder_identity() const override { return encoder_->identity(); }

    std::unique_ptr<Objective> with_seed_stream(std::uint64_t seed_stream) const override
    {
        CutoutPolicy policy = policy_;
        policy.seed_stream = seed_stream;
        return std::make_unique<PipelineObjective>(generator_, encoder_, target_, policy);
    }

private:
    void check_shape(const LatentCode& latent) const
    {
        if (!(latent.shape == generator_->latent_shape()))
            throw ShapeError("latent shape does not match the generator");
    }

    std::shared_ptr<const Generator> generator_;
    std::shared_ptr<const Encoder> encoder_;
    FeatureVector target_;
    CutoutPolicy policy_;
};

} // namespace latentsearch
