#pragma once

#include "cutouts.hpp"
#include "errors.hpp"
#include "features.hpp"
#include "image.hpp"
#include "latent.hpp"
#include "models.hpp"
#include "objective.hpp"
#include "random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace latentsearch {

struct ToyGeneratorConfig {
    LatentShape shape{2, 16};
    int hidden_width = 64;
    int image_size = 32;
    std::uint64_t seed = 1;
    double input_gain = 1.0;
    /// 0 gives a constant image (colour set by the per-channel output bias).
    double output_gain = 1.0;
};

/// Small frozen network with one affine+tanh stage per latent layer.
///
///   h_0 = tanh(W_0 [c_0; n_0] + b_0)
///   h_i = tanh(A_i h_{i-1} + W_i [c_i; n_i] + b_i),  i = 1..H
///   image = (tanh(P h_H + q) + 1) / 2
///
/// Columns of P are low-frequency colour gratings so that windows of the image
/// carry spatially coherent content. q is one bias per colour channel.
class ToyGenerator final : public Generator {
public:
    explicit ToyGenerator(const ToyGeneratorConfig& config = {}) : config_(config)
    {
        config_.shape.validate();
        if (config_.hidden_width < 1 || config_.image_size < 1)
            throw ConfigError("toy generator dimensions must be >= 1");

        const auto layers = static_cast<Eigen::Index>(config_.shape.layers());
        const auto in = static_cast<Eigen::Index>(2 * config_.shape.latent_dim);
        const Eigen::Index m = config_.hidden_width;
        const int s = config_.image_size;
        Rng rng(derive_seed(config_.seed, "toy-generator"));

        for (Eigen::Index i = 0; i < layers; ++i) {
            input_weights_.push_back(random_matrix(rng, m, in, config_.input_gain / std::sqrt(double(in))));
            recurrent_weights_.push_back(i == 0 ? Eigen::MatrixXd() : random_matrix(rng, m, m, 1.0 / std::sqrt(double(m))));
            biases_.push_back(random_matrix(rng, m, 1, 0.1).col(0));
        }

        const double amplitude = config_.output_gain * 1.5 * std::sqrt(2.0 / double(m));
        output_weights_.resize(static_cast<Eigen::Index>(s) * s * 3, m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const double fx = static_cast<double>(rng.below(7)) - 3.0;
            const double fy = static_cast<double>(rng.below(7)) - 3.0;
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double colour[3] = {rng.normal(), rng.normal(), rng.normal()};
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    const double wave = std::cos(2.0 * std::numbers::pi * (fx * x + fy * y) / s + phase);
                    for (int c = 0; c < 3; ++c)
                        output_weights_((static_cast<Eigen::Index>(y) * s + x) * 3 + c, k) = amplitude * colour[c] * wave;
                }
        }
        for (double& b : channel_bias_)
            b = rng.normal(0.0, 0.2);
    }

    const ToyGeneratorConfig& config() const noexcept { return config_; }
    LatentShape latent_shape() const override { return config_.shape; }
    bool differentiable() const override { return true; }

    std::string identity() const override
    {
        return "toy-generator/v1 H=" + std::to_string(config_.shape.num_hidden_layers)
               + " Z=" + std::to_string(config_.shape.latent_dim) + " M=" + std::to_string(config_.hidden_width)
               + " S=" + std::to_string(config_.image_size) + " seed=" + std::to_string(config_.seed)
               + " gain=" + format_real(config_.input_gain) + "/" + format_real(config_.output_gain);
    }

    ImageTensor generate(const LatentCode& latent) const override
    {
        const auto hidden = forward_hidden(latent);
        return to_image(output_weights_ * hidden.back());
    }

    Eigen::VectorXd pullback(const LatentCode& latent, const ImageTensor& image_grad) const override
    {
        if (image_grad.width != config_.image_size || image_grad.height != config_.image_size)
            throw ShapeError("image gradient has the wrong size");
        const auto hidden = forward_hidden(latent);
        const Eigen::VectorXd out = output_weights_ * hidden.back();

        Eigen::VectorXd d_out(out.size());
        for (Eigen::Index p = 0; p < out.size(); ++p) {
            const double t = std::tanh(out[p] + channel_bias_[p % 3]);
            d_out[p] = 0.5 * image_grad.values[static_cast<std::size_t>(p)] * (1.0 - t * t);
        }
        Eigen::VectorXd d_hidden = output_weights_.transpose() * d_out;

        const auto& shape = config_.shape;
        const auto dim = static_cast<Eigen::Index>(shape.latent_dim);
        const auto layers = static_cast<Eigen::Index>(shape.layers());
        Eigen::VectorXd grad(static_cast<Eigen::Index>(shape.total()));
        for (Eigen::Index i = layers - 1; i >= 0; --i) {
            const Eigen::VectorXd& h = hidden[static_cast<std::size_t>(i)];
            const Eigen::VectorXd d_pre = d_hidden.cwiseProduct((1.0 - h.array().square()).matrix());
            const Eigen::VectorXd d_input = input_weights_[static_cast<std::size_t>(i)].transpose() * d_pre;
            grad.segment(i * dim, dim) = d_input.head(dim);
            grad.segment((layers + i) * dim, dim) = d_input.tail(dim);
            if (i > 0)
                d_hidden = recurrent_weights_[static_cast<std::size_t>(i)].transpose() * d_pre;
        }
        return grad;
    }

private:
    static Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale)
    {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                m(i, j) = scale * rng.normal();
        return m;
    }

    std::vector<Eigen::VectorXd> forward_hidden(const LatentCode& latent) const
    {
        if (!(latent.shape == config_.shape))
            throw ShapeError("latent shape does not match the toy generator");
        const auto layers = static_cast<Eigen::Index>(config_.shape.layers());
        const auto dim = static_cast<Eigen::Index>(config_.shape.latent_dim);
        std::vector<Eigen::VectorXd> hidden;
        hidden.reserve(static_cast<std::size_t>(layers));
        Eigen::VectorXd input(2 * dim);
        for (Eigen::Index i = 0; i < layers; ++i) {
            input.head(dim) = latent.class_part.row(i).transpose();
            input.tail(dim) = latent.noise_part.row(i).transpose();
            const auto k = static_cast<std::size_t>(i);
            Eigen::VectorXd pre = input_weights_[k] * input + biases_[k];
            if (i > 0)
                pre.noalias() += recurrent_weights_[k] * hidden.back();
            hidden.push_back(pre.array().tanh().matrix());
        }
        return hidden;
    }

    ImageTensor to_image(const Eigen::VectorXd& out) const
    {
        ImageTensor image = ImageTensor::filled(config_.image_size, config_.image_size);
        for (Eigen::Index p = 0; p < out.size(); ++p)
            image.values[static_cast<std::size_t>(p)] = 0.5 * (std::tanh(out[p] + channel_bias_[p % 3]) + 1.0);
        return image;
    }

    ToyGeneratorConfig config_;
    std::vector<Eigen::MatrixXd> input_weights_;
    std::vector<Eigen::MatrixXd> recurrent_weights_;
    std::vector<Eigen::VectorXd> biases_;
    Eigen::MatrixXd output_weights_;
    double channel_bias_[3] = {0.0, 0.0, 0.0};
};

struct ToyEncoderConfig {
    int input_size = 64;
    /// Side of the square pixel blocks averaged before the projection.
    int pool = 2;
    std::size_t feature_dim = 32;
    std::uint64_t seed = 2;
    /// 0 gives a constant encoder (features set by the bias alone).
    double weight_gain = 3.0;
    double bias_scale = 0.1;
};

/// features = normalize(tanh(W (pool(x) - 0.5) + b)), x the flattened input
/// image and pool() the mean over non-overlapping pool x pool pixel blocks.
/// The whole pre-activation is an affine map of x.
class ToyEncoder final : public Encoder {
public:
    explicit ToyEncoder(const ToyEncoderConfig& config = {}) : config_(config)
    {
        if (config_.input_size < 1 || config_.feature_dim < 1 || config_.pool < 1)
            throw ConfigError("toy encoder dimensions must be >= 1");
        if (config_.input_size % config_.pool != 0)
            throw ConfigError("toy encoder input size must be a multiple of the pool size");
        const auto f = static_cast<Eigen::Index>(config_.feature_dim);
        const int grid = config_.input_size / config_.pool;
        const Eigen::Index n = static_cast<Eigen::Index>(grid) * grid * 3;
        Rng rng(derive_seed(config_.seed, "toy-encoder"));
        // Row-major so that each feature's weights are contiguous.
        weights_.resize(f, n);
        const double scale = config_.weight_gain / std::sqrt(static_cast<double>(n));
        for (Eigen::Index i = 0; i < f; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                weights_(i, j) = scale * rng.normal();
        bias_.resize(f);
        for (Eigen::Index i = 0; i < f; ++i)
            bias_[i] = config_.bias_scale * rng.normal();
    }

    const ToyEncoderConfig& config() const noexcept { return config_; }
    std::size_t feature_dim() const override { return config_.feature_dim; }
    int input_size() const override { return config_.input_size; }
    bool differentiable() const override { return true; }

    std::string identity() const override
    {
        return "toy-encoder/v1 S=" + std::to_string(config_.input_size) + " P="
               + std::to_string(config_.pool) + " F="
               + std::to_string(config_.feature_dim) + " seed=" + std::to_string(config_.seed)
               + " gain=" + format_real(config_.weight_gain) + "/" + format_real(config_.bias_scale);
    }

    FeatureVector encode(const ImageTensor& image) const override
    {
        const Eigen::VectorXd activation = activations(image);
        const double norm = activation.norm();
        if (!(norm > 0.0))
            throw DegenerateInputError("toy encoder produced a zero activation");
        return FeatureVector(activation / norm);
    }

    ImageTensor pullback(const ImageTensor& image, const Eigen::VectorXd& feature_grad) const override
    {
        const Eigen::VectorXd activation = activations(image);
        const double norm = activation.norm();
        if (!(norm > 0.0))
            throw DegenerateInputError("toy encoder produced a zero activation");
        const Eigen::VectorXd features = activation / norm;
        const Eigen::VectorXd d_activation = (feature_grad - features * features.dot(feature_grad)) / norm;
        const Eigen::VectorXd d_pre = d_activation.cwiseProduct((1.0 - activation.array().square()).matrix());
        const Eigen::VectorXd d_pooled = weights_.transpose() * d_pre;

        const int p = config_.pool;
        const int grid = config_.input_size / p;
        const double share = 1.0 / (p * p);
        ImageTensor grad = ImageTensor::filled(image.width, image.height);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < 3; ++c)
                    grad.at(y, x, c) = share * d_pooled[(static_cast<Eigen::Index>(y / p) * grid + x / p) * 3 + c];
        return grad;
    }

private:
    Eigen::VectorXd activations(const ImageTensor& image) const
    {
        if (image.width != config_.input_size || image.height != config_.input_size)
            throw ShapeError("toy encoder expects " + std::to_string(config_.input_size) + "x"
                             + std::to_string(config_.input_size) + " input, got "
                             + std::to_string(image.width) + "x" + std::to_string(image.height));
        const int p = config_.pool;
        const int grid = config_.input_size / p;
        Eigen::VectorXd pooled = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid) * grid * 3);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < 3; ++c)
                    pooled[(static_cast<Eigen::Index>(y / p) * grid + x / p) * 3 + c] += image.at(y, x, c);
        pooled = pooled / static_cast<double>(p * p) - Eigen::VectorXd::Constant(pooled.size(), 0.5);
        return (weights_ * pooled + bias_).array().tanh().matrix();
    }

    ToyEncoderConfig config_;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights_;
    Eigen::VectorXd bias_;
};

/// Unit vector seeded from a stable hash of the text.
inline FeatureVector toy_text_target(std::string_view text, std::size_t dim)
{
    if (dim < 1)
        throw ConfigError("target dimension must be >= 1");
    Rng rng(fnv1a64(text));
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = rng.normal();
    return FeatureVector(v / v.norm());
}

struct MultimodalTarget {
    FeatureVector target;
    /// Latents whose full-frame embeddings all lie close to `target`.
    std::vector<LatentCode> anchors;
};

/// Target that several far-apart latents match about equally well.
///
/// Each of `candidates` standard-normal latents is summarized by the mean of
/// its cutout embeddings over `probe_cuts` windows drawn from `policy`; the
/// mean cutout cosine of a latent is largest against that direction. Greedy
/// selection then picks `num_anchors` candidates maximizing the smallest
/// pairwise cosine among their summaries, and the target is the normalized
/// mean of the picked summaries. Independent standard-normal latents in D
/// dimensions sit about sqrt(2D) apart, so the anchors mark separated regions.
inline MultimodalTarget toy_multimodal_target(const Generator& generator, const Encoder& encoder,
                                              const CutoutPolicy& policy, std::size_t num_anchors = 4,
                                              std::uint64_t seed = 7, std::size_t candidates = 256,
                                              int probe_cuts = 32)
{
    if (num_anchors < 1 || candidates < num_anchors)
        throw ConfigError("a multimodal target needs 1 <= anchors <= candidates");
    CutoutPolicy probe = policy;
    probe.num_cuts = probe_cuts;
    probe.seed_stream = derive_seed(seed, "probe-cuts");
    probe.validate();
    std::vector<LatentCode> pool;
    std::vector<Eigen::VectorXd> features;
    for (std::size_t k = 0; k < candidates; ++k) {
        pool.push_back(new_latent(generator.latent_shape(),
                                  {InitKind::StandardNormal, 2.0, derive_seed(seed, "anchor", k)}));
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(encoder.feature_dim()));
        for (const ImageTensor& cut : make_cutouts(generator.generate(pool.back()), probe, 0)) {
            const Eigen::VectorXd f = encoder.encode(cut).values;
            mean += f / f.norm();
        }
        features.push_back(mean);
    }

    for (auto& f : features) {
        if (!(f.norm() > 0.0))
            throw DegenerateInputError("candidate embedding is zero");
        f /= f.norm();
    }

    // Start from the most similar pair, then grow the set greedily.
    std::vector<std::size_t> picked{0};
    if (num_anchors > 1) {
        double best_pair = -2.0;
        for (std::size_t a = 0; a < candidates; ++a)
            for (std::size_t b = a + 1; b < candidates; ++b)
                if (const double cs = features[a].dot(features[b]); cs > best_pair) {
                    best_pair = cs;
                    picked = {a, b};
                }
    }
    std::vector<double> worst(candidates, 1.0); // min cosine to the picked set
    for (std::size_t p : picked)
        for (std::size_t c = 0; c < candidates; ++c)
            worst[c] = std::min(worst[c], features[c].dot(features[p]));
    while (picked.size() < num_anchors) {
        std::size_t best = candidates;
        for (std::size_t c = 0; c < candidates; ++c)
            if (std::find(picked.begin(), picked.end(), c) == picked.end()
                && (best == candidates || worst[c] > worst[best]))
                best = c;
        picked.push_back(best);
        for (std::size_t c = 0; c < candidates; ++c)
            worst[c] = std::min(worst[c], features[c].dot(features[best]));
    }

    MultimodalTarget out;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(encoder.feature_dim()));
    for (std::size_t c : picked) {
        sum += features[c];
        out.anchors.push_back(pool[c]);
    }
    if (!(sum.norm() > 0.0))
        throw DegenerateInputError("anchor embeddings cancel; the multimodal target is undefined");
    out.target = FeatureVector(sum / sum.norm());
    return out;
}

inline Eigen::VectorXd toy_loss_grad(const std::shared_ptr<const ToyGenerator>& generator,
                                     const std::shared_ptr<const ToyEncoder>& encoder,
                                     const LatentCode& latent, const FeatureVector& target,
                                     const CutoutPolicy& policy, std::uint64_t iteration)
{
    const PipelineObjective objective(generator, encoder, target, policy);
    return objective.fitness_and_gradient(latent, iteration).loss_gradient;
}

} // namespace latentsearch
