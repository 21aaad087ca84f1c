#pragma once

#include "errors.hpp"
#include "text_io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace latentsearch {

/// Fixed-length embedding produced by an encoder.
struct FeatureVector {
    Eigen::VectorXd values;

    FeatureVector() = default;
    explicit FeatureVector(Eigen::VectorXd v) : values(std::move(v)) {}

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }

    friend bool operator==(const FeatureVector& a, const FeatureVector& b)
    {
        return a.values.size() == b.values.size() && a.values == b.values;
    }
};

/// a.b / (|a| |b|), clamped to [-1, 1].
inline double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                                const Eigen::Ref<const Eigen::VectorXd>& b)
{
    if (a.size() != b.size())
        throw ShapeError("cosine similarity of vectors with lengths " + std::to_string(a.size())
                         + " and " + std::to_string(b.size()));
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw DegenerateInputError("cosine similarity of a zero vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

inline double cosine_similarity(const FeatureVector& a, const FeatureVector& b)
{
    return cosine_similarity(a.values, b.values);
}

/// Gradient of cos(a, b) with respect to a.
inline Eigen::VectorXd cosine_similarity_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw DegenerateInputError("cosine similarity of a zero vector");
    const double cosine = a.dot(b) / (na * nb);
    return b / (na * nb) - cosine * a / (na * na);
}

// Feature dump: "features v1 F" then F reals, one per line.

inline void write_features(std::ostream& out, const FeatureVector& features)
{
    out << "features v1 " << features.size() << '\n';
    for (double v : features.values)
        out << format_real(v) << '\n';
}

inline FeatureVector read_features(std::istream& in)
{
    std::string magic, version;
    std::size_t dim = 0;
    if (!(in >> magic >> version >> dim) || magic != "features" || version != "v1")
        throw ConfigError("not a 'features v1' dump");
    if (dim == 0)
        throw ShapeError("feature dump declares zero length");
    Eigen::VectorXd values(static_cast<Eigen::Index>(dim));
    std::string token;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!(in >> token))
            throw ShapeError("feature dump truncated at entry " + std::to_string(i));
        values[i] = parse_real(token);
    }
    if (in >> token)
        throw ShapeError("feature dump has trailing entries");
    if (!values.allFinite())
        throw NumericError("feature dump contains non-finite values");
    return FeatureVector(std::move(values));
}

inline void save_features(const std::string& path, const FeatureVector& features)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot write " + path);
    write_features(out, features);
}

inline FeatureVector load_features(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read " + path);
    return read_features(in);
}

} // namespace latentsearch
