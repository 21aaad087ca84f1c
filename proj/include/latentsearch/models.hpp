#pragma once

#include "errors.hpp"
#include "features.hpp"
#include "image.hpp"
#include "latent.hpp"

#include <Eigen/Core>

#include <string>

namespace latentsearch {

/// Conditional image generator: LatentCode -> image.
class Generator {
public:
    virtual ~Generator() = default;

    virtual LatentShape latent_shape() const = 0;
    virtual ImageTensor generate(const LatentCode& latent) const = 0;
    virtual std::string identity() const = 0;

    virtual bool differentiable() const { return false; }

    /// Vector-Jacobian product: d(image)/d(flat latent) transposed times `image_grad`.
    virtual Eigen::VectorXd pullback(const LatentCode& /*latent*/, const ImageTensor& /*image_grad*/) const
    {
        throw CapabilityError("generator '" + identity() + "' does not provide gradients");
    }
};

/// Image encoder: image -> feature vector.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual std::size_t feature_dim() const = 0;
    /// Required square input side, or 0 when any size is accepted.
    virtual int input_size() const { return 0; }
    virtual FeatureVector encode(const ImageTensor& image) const = 0;
    virtual std::string identity() const = 0;

    virtual bool differentiable() const { return false; }

    /// Vector-Jacobian product: d(features)/d(image) transposed times `feature_grad`.
    virtual ImageTensor pullback(const ImageTensor& /*image*/, const Eigen::VectorXd& /*feature_grad*/) const
    {
        throw CapabilityError("encoder '" + identity() + "' does not provide gradients");
    }
};

} // namespace latentsearch
