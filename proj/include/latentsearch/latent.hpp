#pragma once

#include "errors.hpp"
#include "random.hpp"
#include "text_io.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace latentsearch {

/// Layered latent geometry: one class row and one noise row of `latent_dim`
/// entries for the input layer and for each hidden block.
struct LatentShape {
    std::size_t num_hidden_layers = 14;
    std::size_t latent_dim = 128;

    constexpr std::size_t layers() const noexcept { return 1 + num_hidden_layers; }
    constexpr std::size_t total() const noexcept { return layers() * 2 * latent_dim; }

    void validate() const
    {
        if (latent_dim < 1)
            throw ConfigError("latent_dim must be >= 1");
    }

    friend constexpr bool operator==(const LatentShape&, const LatentShape&) = default;
};

/// Per-layer class and noise latents, each (layers x latent_dim), row = layer.
struct LatentCode {
    LatentShape shape;
    Eigen::MatrixXd class_part;
    Eigen::MatrixXd noise_part;

    static LatentCode zeros(const LatentShape& shape)
    {
        shape.validate();
        const auto rows = static_cast<Eigen::Index>(shape.layers());
        const auto cols = static_cast<Eigen::Index>(shape.latent_dim);
        return {shape, Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
    }

    friend bool operator==(const LatentCode& a, const LatentCode& b)
    {
        return a.shape == b.shape && a.class_part == b.class_part && a.noise_part == b.noise_part;
    }
};

enum class InitKind { StandardNormal, TruncatedNormal, Zeros };

struct LatentInit {
    InitKind kind = InitKind::StandardNormal;
    double bound = 2.0; // TruncatedNormal only
    std::uint64_t seed = 0;
};

/// Flat layout: class rows (layer 0..L-1), then noise rows (layer 0..L-1).
inline Eigen::VectorXd flatten(const LatentCode& code)
{
    const auto& shape = code.shape;
    const auto layers = static_cast<Eigen::Index>(shape.layers());
    const auto dim = static_cast<Eigen::Index>(shape.latent_dim);
    if (code.class_part.rows() != layers || code.class_part.cols() != dim
        || code.noise_part.rows() != layers || code.noise_part.cols() != dim)
        throw ShapeError("latent parts do not match their declared shape");

    Eigen::VectorXd flat(static_cast<Eigen::Index>(shape.total()));
    Eigen::Index k = 0;
    for (Eigen::Index layer = 0; layer < layers; ++layer)
        for (Eigen::Index j = 0; j < dim; ++j)
            flat[k++] = code.class_part(layer, j);
    for (Eigen::Index layer = 0; layer < layers; ++layer)
        for (Eigen::Index j = 0; j < dim; ++j)
            flat[k++] = code.noise_part(layer, j);
    return flat;
}

inline LatentCode unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat, const LatentShape& shape)
{
    if (static_cast<std::size_t>(flat.size()) != shape.total())
        throw ShapeError("flat latent has " + std::to_string(flat.size()) + " entries, shape needs "
                         + std::to_string(shape.total()));
    LatentCode code = LatentCode::zeros(shape);
    const auto layers = static_cast<Eigen::Index>(shape.layers());
    const auto dim = static_cast<Eigen::Index>(shape.latent_dim);
    Eigen::Index k = 0;
    for (Eigen::Index layer = 0; layer < layers; ++layer)
        for (Eigen::Index j = 0; j < dim; ++j)
            code.class_part(layer, j) = flat[k++];
    for (Eigen::Index layer = 0; layer < layers; ++layer)
        for (Eigen::Index j = 0; j < dim; ++j)
            code.noise_part(layer, j) = flat[k++];
    return code;
}

/// Entries are drawn in flat order from a stream seeded by `init.seed`.
inline LatentCode new_latent(const LatentShape& shape, const LatentInit& init)
{
    shape.validate();
    if (init.kind == InitKind::TruncatedNormal && !(init.bound > 0.0))
        throw ConfigError("truncated-normal bound must be > 0");

    Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.total()));
    if (init.kind != InitKind::Zeros) {
        Rng rng(init.seed);
        for (Eigen::Index i = 0; i < flat.size(); ++i)
            flat[i] = init.kind == InitKind::StandardNormal ? rng.normal()
                                                            : rng.truncated_normal(init.bound);
    }
    return unflatten(flat, shape);
}

inline bool all_finite(const LatentCode& code)
{
    return code.class_part.allFinite() && code.noise_part.allFinite();
}

// Latent dump: "latent v1 H Z" then one real per line in flat order.

inline void write_latent(std::ostream& out, const LatentCode& code)
{
    out << "latent v1 " << code.shape.num_hidden_layers << ' ' << code.shape.latent_dim << '\n';
    const Eigen::VectorXd flat = flatten(code);
    for (double v : flat)
        out << format_real(v) << '\n';
}

inline LatentCode read_latent(std::istream& in)
{
    std::string magic, version;
    std::size_t hidden = 0, dim = 0;
    if (!(in >> magic >> version >> hidden >> dim) || magic != "latent" || version != "v1")
        throw ConfigError("not a 'latent v1' dump");
    const LatentShape shape{hidden, dim};
    shape.validate();
    Eigen::VectorXd flat(static_cast<Eigen::Index>(shape.total()));
    std::string token;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        if (!(in >> token))
            throw ShapeError("latent dump truncated at entry " + std::to_string(i));
        flat[i] = parse_real(token);
    }
    if (in >> token)
        throw ShapeError("latent dump has trailing entries");
    return unflatten(flat, shape);
}

inline void save_latent(const std::string& path, const LatentCode& code)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot write " + path);
    write_latent(out, code);
}

inline LatentCode load_latent(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read " + path);
    return read_latent(in);
}

} // namespace latentsearch
