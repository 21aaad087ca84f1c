#pragma once

#include "../cutouts.hpp"
#include "../errors.hpp"
#include "../features.hpp"
#include "../image.hpp"
#include "../latent.hpp"
#include "../models.hpp"
#include "../objective.hpp"
#include "transport.hpp"
#include "wire.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace latentsearch::bridge {

struct BridgeInfo {
    std::size_t feature_dim = 0;
    LatentShape shape;
    int image_width = 0;
    int image_height = 0;
    /// Square side the image encoder expects, 0 for any.
    int encoder_input_size = 0;
    bool gradients = true;
    std::string generator_id;
    std::string encoder_id;
};

inline WireTensor latent_tensor(const LatentCode& latent)
{
    const Eigen::VectorXd flat = flatten(latent);
    WireTensor t{{static_cast<std::size_t>(flat.size())}, {}};
    t.data.assign(flat.begin(), flat.end());
    return t;
}

inline WireTensor image_tensor(const ImageTensor& image)
{
    WireTensor t{{static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width), 3}, {}};
    t.data.assign(image.values.begin(), image.values.end());
    return t;
}

inline WireTensor feature_tensor(const FeatureVector& f)
{
    WireTensor t{{f.size()}, {}};
    t.data.assign(f.values.begin(), f.values.end());
    return t;
}

/// Decoded vector of exactly `length` finite entries.
inline Eigen::VectorXd expect_vector(const Json& j, std::size_t length, const char* what)
{
    const WireTensor t = decode_tensor(j);
    if (t.shape.size() != 1 || t.shape[0] != length)
        throw ProtocolError(std::string(what) + " must have shape [" + std::to_string(length) + "]");
    Eigen::VectorXd v(static_cast<Eigen::Index>(length));
    for (std::size_t i = 0; i < length; ++i) {
        if (!std::isfinite(t.data[i]))
            throw ProtocolError(std::string(what) + " contains non-finite values");
        v[static_cast<Eigen::Index>(i)] = t.data[i];
    }
    return v;
}

/// Client for the line-delimited bridge protocol. One request is in flight
/// at a time; concurrent callers are serialized.
class BridgeClient {
public:
    explicit BridgeClient(std::unique_ptr<Transport> transport) : transport_(std::move(transport))
    {
        if (!transport_)
            throw ConfigError("bridge client needs a transport");
    }

    /// Payload of the response to `op`; see parse_response for error mapping.
    Json call(const std::string& op, const Json& payload)
    {
        const std::lock_guard lock(mutex_);
        const std::uint64_t id = next_id_++;
        return parse_response(transport_->exchange(request_line(id, op, payload)), id);
    }

    const BridgeInfo& info()
    {
        {
            const std::lock_guard lock(mutex_);
            if (info_)
                return *info_;
        }
        const Json p = call("info", Json::object());
        BridgeInfo info;
        info.feature_dim = field<std::size_t>(p, "feature_dim");
        info.shape = {field<std::size_t>(p, "num_hidden_layers"), field<std::size_t>(p, "latent_dim")};
        const auto total = field<std::size_t>(p, "latent_total");
        if (info.shape.total() != total || info.feature_dim == 0 || info.shape.latent_dim == 0)
            throw ProtocolError("bridge info is inconsistent: latent_total " + std::to_string(total)
                                + " vs (1 + H) * 2 * Z = " + std::to_string(info.shape.total()));
        const Json& res = p.contains("image_resolution") ? p.at("image_resolution") : Json();
        if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer()
            || res[0].get<std::uint64_t>() < 1 || res[1].get<std::uint64_t>() < 1
            || res[0].get<std::uint64_t>() > 65536 || res[1].get<std::uint64_t>() > 65536)
            throw ProtocolError("bridge info needs image_resolution [width, height]");
        info.image_width = res[0].get<int>();
        info.image_height = res[1].get<int>();
        info.encoder_input_size = static_cast<int>(field<std::uint32_t>(p, "encoder_input_size"));
        info.gradients = p.contains("gradients") ? field<bool>(p, "gradients") : true;
        info.generator_id = field<std::string>(p, "generator");
        info.encoder_id = field<std::string>(p, "encoder");
        const std::lock_guard lock(mutex_);
        info_ = std::move(info);
        return *info_;
    }

    FeatureVector encode_text(const std::string& text)
    {
        if (text.empty())
            throw ConfigError("target text must not be empty");
        const std::size_t dim = info().feature_dim;
        return FeatureVector(expect_vector(member(call("encode_text", {{"text", text}}), "features"), dim,
                                           "text features"));
    }

    FeatureVector encode_image(const ImageTensor& image)
    {
        const std::size_t dim = info().feature_dim;
        const Json p = call("encode_image", {{"image", encode_tensor(image_tensor(image))}});
        return FeatureVector(expect_vector(member(p, "features"), dim, "image features"));
    }

    ImageTensor generate(const LatentCode& latent)
    {
        const BridgeInfo& i = info();
        check_latent(latent, i);
        const Json p = call("generate", {{"latent", encode_tensor(latent_tensor(latent))}});
        const WireTensor t = decode_tensor(member(p, "image"));
        if (t.shape != std::vector<std::size_t>{static_cast<std::size_t>(i.image_height),
                                                static_cast<std::size_t>(i.image_width), 3})
            throw ProtocolError("generated image shape differs from the declared resolution");
        ImageTensor image = ImageTensor::filled(i.image_width, i.image_height);
        for (std::size_t k = 0; k < t.data.size(); ++k) {
            if (!(t.data[k] >= 0.0f && t.data[k] <= 1.0f))
                throw ProtocolError("generated image value outside [0, 1]");
            image.values[k] = t.data[k];
        }
        return image;
    }

    /// Server-side fitness and loss gradient over explicit cut windows.
    FitnessGradient generate_with_grad(const LatentCode& latent, const FeatureVector& target,
                                       const CutoutPolicy& policy, std::uint64_t iteration)
    {
        const BridgeInfo& i = info();
        check_latent(latent, i);
        if (!i.gradients)
            throw CapabilityError("bridge backend '" + i.generator_id + "' does not provide gradients");
        if (target.size() != i.feature_dim)
            throw ShapeError("target feature length does not match the bridge encoder");
        Json windows = Json::array();
        for (const Window& w : sample_windows(policy, i.image_width, i.image_height, iteration))
            windows.push_back({w.x, w.y, w.side});
        const Json cutouts{{"seed", policy.seed_stream},         {"iteration", iteration},
                           {"num_cuts", policy.num_cuts},        {"min_fraction", policy.min_fraction},
                           {"max_fraction", policy.max_fraction}, {"resize_to", policy.resize_to},
                           {"windows", windows}};
        const Json p = call("generate_with_grad", {{"latent", encode_tensor(latent_tensor(latent))},
                                                   {"text_features", encode_tensor(feature_tensor(target))},
                                                   {"cutouts", cutouts}});
        const double fit = field<double>(p, "fitness");
        if (!(fit >= -1.0 - 1e-6 && fit <= 1.0 + 1e-6))
            throw ProtocolError("bridge fitness outside [-1, 1]");
        return {fit, expect_vector(member(p, "gradient"), i.shape.total(), "gradient")};
    }

    std::string describe() const { return transport_->describe(); }

private:
    static void check_latent(const LatentCode& latent, const BridgeInfo& i)
    {
        if (!(latent.shape == i.shape))
            throw ShapeError("latent has " + std::to_string(latent.shape.total()) + " entries, bridge expects "
                             + std::to_string(i.shape.total()));
    }

    std::unique_ptr<Transport> transport_;
    std::mutex mutex_;
    std::uint64_t next_id_ = 1;
    std::optional<BridgeInfo> info_;
};

class BridgeGenerator final : public Generator {
public:
    explicit BridgeGenerator(std::shared_ptr<BridgeClient> client) : client_(std::move(client)) {}
    LatentShape latent_shape() const override { return client_->info().shape; }
    ImageTensor generate(const LatentCode& latent) const override { return client_->generate(latent); }
    std::string identity() const override { return "bridge:" + client_->info().generator_id; }

private:
    std::shared_ptr<BridgeClient> client_;
};

class BridgeEncoder final : public Encoder {
public:
    explicit BridgeEncoder(std::shared_ptr<BridgeClient> client) : client_(std::move(client)) {}
    std::size_t feature_dim() const override { return client_->info().feature_dim; }
    int input_size() const override { return client_->info().encoder_input_size; }
    FeatureVector encode(const ImageTensor& image) const override { return client_->encode_image(image); }
    std::string identity() const override { return "bridge:" + client_->info().encoder_id; }

private:
    std::shared_ptr<BridgeClient> client_;
};

/// Objective served by a bridge. Fitness runs the cut pipeline client-side
/// (generate, crop, encode_image per cut); gradients come from
/// generate_with_grad with the same windows.
class BridgeObjective final : public Objective {
public:
    BridgeObjective(std::shared_ptr<BridgeClient> client, FeatureVector target, CutoutPolicy policy)
        : client_(std::move(client)), target_(std::move(target)), policy_(policy),
          pipeline_(std::make_shared<BridgeGenerator>(client_), std::make_shared<BridgeEncoder>(client_), target_,
                    policy_)
    {
    }

    LatentShape latent_shape() const override { return pipeline_.latent_shape(); }
    const CutoutPolicy& cutouts() const override { return policy_; }
    double fitness(const LatentCode& latent, std::uint64_t iteration) const override
    {
        return pipeline_.fitness(latent, iteration);
    }
    bool differentiable() const override { return client_->info().gradients; }
    FitnessGradient fitness_and_gradient(const LatentCode& latent, std::uint64_t iteration) const override
    {
        return client_->generate_with_grad(latent, target_, policy_, iteration);
    }
    ImageTensor render(const LatentCode& latent) const override { return pipeline_.render(latent); }
    FeatureVector embed(const ImageTensor& image) const override { return pipeline_.embed(image); }
    std::string generator_identity() const override { return pipeline_.generator_identity(); }
    std::string encoder_identity() const override { return pipeline_.encoder_identity(); }
    std::unique_ptr<Objective> with_seed_stream(std::uint64_t seed_stream) const override
    {
        CutoutPolicy policy = policy_;
        policy.seed_stream = seed_stream;
        return std::make_unique<BridgeObjective>(client_, target_, policy);
    }

private:
    std::shared_ptr<BridgeClient> client_;
    FeatureVector target_;
    CutoutPolicy policy_;
    PipelineObjective pipeline_;
};

} // namespace latentsearch::bridge
