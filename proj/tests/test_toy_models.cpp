#include <latentsearch/adam.hpp>
#include <latentsearch/finite_diff.hpp>
#include <latentsearch/gradcheck.hpp>
#include <latentsearch/toy_models.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>

using namespace latentsearch;
using Catch::Matchers::WithinAbs;

namespace {

const std::string golden_png = std::string(LATENTSEARCH_TEST_DATA) + "/toy_zero_latent.png";

double max_pixel_delta(const ImageTensor& a, const ImageTensor& b)
{
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a.values[i] - b.values[i]));
    return d;
}

} // namespace

TEST_CASE("toy generator")
{
    const ToyGenerator gen;
    const LatentShape shape = gen.latent_shape();
    CHECK(shape == LatentShape{2, 16});

    SECTION("zero latent matches the golden image")
    {
        const ImageTensor img = gen.generate(new_latent(shape, {InitKind::Zeros}));
        CHECK(img.width == 32);
        CHECK(img.height == 32);
        // Regenerate with LATENTSEARCH_UPDATE_GOLDEN=1 after an intended model change.
        if (std::getenv("LATENTSEARCH_UPDATE_GOLDEN"))
            write_png(golden_png, img);
        REQUIRE(std::filesystem::exists(golden_png));
        const ImageTensor golden = read_png(golden_png);
        REQUIRE(golden.width == 32);
        REQUIRE(golden.height == 32);
        // 8-bit quantization: at most half a level per channel.
        CHECK(max_pixel_delta(img, golden) <= 0.5 / 255.0 + 1e-12);
    }
    SECTION("outputs stay in [0, 1] for latents in [-10, 10]")
    {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd flat(shape.total());
            for (Eigen::Index i = 0; i < flat.size(); ++i)
                flat[i] = rng.uniform(-10.0, 10.0);
            for (double v : gen.generate(unflatten(flat, shape)).values) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
    }
    SECTION("same seed gives the same image, a different seed a different one")
    {
        const LatentCode z = new_latent(shape, {InitKind::StandardNormal, 2.0, 1});
        const ToyGenerator twin;
        const ToyGenerator other(ToyGeneratorConfig{{2, 16}, 64, 32, 2});
        CHECK(gen.generate(z) == twin.generate(z));
        // A seed change redraws every weight; most pixels must move.
        const ImageTensor a = gen.generate(z);
        const ImageTensor b = other.generate(z);
        std::size_t moved = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            moved += std::abs(a.values[i] - b.values[i]) > 1e-6;
        CHECK(moved > a.size() * 9 / 10);
        CHECK(gen.identity() != other.identity());
    }
    SECTION("every layer's noise part influences the image")
    {
        const LatentCode base = new_latent(shape, {InitKind::StandardNormal, 2.0, 2});
        const ImageTensor ref = gen.generate(base);
        for (Eigen::Index layer = 0; layer < static_cast<Eigen::Index>(shape.layers()); ++layer) {
            LatentCode moved = base;
            moved.noise_part.row(layer).array() += 0.5;
            CHECK(max_pixel_delta(gen.generate(moved), ref) > 1e-4);
            LatentCode moved_class = base;
            moved_class.class_part.row(layer).array() -= 0.5;
            CHECK(max_pixel_delta(gen.generate(moved_class), ref) > 1e-4);
        }
    }
    SECTION("shape mismatch")
    {
        CHECK_THROWS_AS(gen.generate(new_latent({1, 16}, {InitKind::Zeros})), ShapeError);
        CHECK_THROWS_AS(gen.pullback(new_latent(shape, {InitKind::Zeros}), ImageTensor::filled(8, 8)), ShapeError);
    }
}

TEST_CASE("toy encoder")
{
    const ToyEncoder enc;
    CHECK(enc.feature_dim() == 32);
    CHECK(enc.input_size() == 64);

    SECTION("unit-norm output")
    {
        Rng rng(6);
        for (int trial = 0; trial < 10; ++trial) {
            ImageTensor img = ImageTensor::filled(64, 64);
            for (double& v : img.values)
                v = rng.uniform();
            const FeatureVector f = enc.encode(img);
            CHECK(f.size() == 32);
            CHECK_THAT(f.values.norm(), WithinAbs(1.0, 1e-12));
        }
    }
    SECTION("identical images give identical features")
    {
        const ImageTensor img = ImageTensor::filled(64, 64, 0.3);
        CHECK(enc.encode(img) == enc.encode(img));
        CHECK(ToyEncoder().encode(img) == enc.encode(img));
    }
    SECTION("black and white are distinguished")
    {
        const FeatureVector black = enc.encode(ImageTensor::filled(64, 64, 0.0));
        const FeatureVector white = enc.encode(ImageTensor::filled(64, 64, 1.0));
        CHECK(cosine_similarity(black, white) < 1.0);
    }
    SECTION("pooling averages each block")
    {
        // Permuting pixels inside a 2x2 block leaves the pooled input unchanged.
        ImageTensor a = ImageTensor::filled(64, 64, 0.2);
        a.at(0, 0, 0) = 0.9;
        ImageTensor b = ImageTensor::filled(64, 64, 0.2);
        b.at(1, 1, 0) = 0.9;
        CHECK_THAT(cosine_similarity(enc.encode(a), enc.encode(b)), WithinAbs(1.0, 1e-12));
    }
    SECTION("size mismatch and invalid configs")
    {
        CHECK_THROWS_AS(enc.encode(ImageTensor::filled(32, 32)), ShapeError);
        CHECK_THROWS_AS(ToyEncoder(ToyEncoderConfig{63, 2}), ConfigError);
        CHECK_THROWS_AS(ToyEncoder(ToyEncoderConfig{64, 0}), ConfigError);
    }
}

TEST_CASE("toy text target")
{
    const FeatureVector a = toy_text_target("a red apple", 32);
    CHECK(a == toy_text_target("a red apple", 32));
    CHECK_FALSE(a == toy_text_target("a green apple", 32));
    CHECK_THAT(a.values.norm(), WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(toy_text_target("x", 0), ConfigError);
}

TEST_CASE("finite_diff_grad")
{
    const Eigen::Vector2d x(1.0, 2.0);
    const auto sphere = finite_diff_grad([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, x, 1e-5);
    CHECK_THAT(sphere[0], WithinAbs(2.0, 1e-6));
    CHECK_THAT(sphere[1], WithinAbs(4.0, 1e-6));

    const auto flat = finite_diff_grad([](const Eigen::VectorXd&) { return 3.0; }, x, 1e-5);
    CHECK(flat.isZero(0.0));

    const Eigen::Vector3d a(0.5, -1.25, 3.0);
    const auto linear = finite_diff_grad([&](const Eigen::VectorXd& v) { return a.dot(v); },
                                         Eigen::Vector3d(0.1, 0.2, -0.3), 1e-5);
    CHECK((linear - a).cwiseAbs().maxCoeff() < 1e-9);

    CHECK_THROWS_AS(finite_diff_grad([](const Eigen::VectorXd&) { return 0.0; }, x, 0.0), ConfigError);
}

TEST_CASE("toy loss gradient")
{
    auto gen = std::make_shared<ToyGenerator>();
    auto enc = std::make_shared<ToyEncoder>();
    const LatentShape shape = gen->latent_shape();

    SECTION("agrees with central differences on every gradcheck configuration")
    {
        for (const auto& c : default_gradcheck_cases()) {
            const GradcheckResult r = run_gradcheck(c, 20);
            INFO(r.name << " max relative error " << r.max_relative_error);
            CHECK(r.probe_errors.size() == 20);
            CHECK(r.max_relative_error < 1e-4);
            CHECK(r.passed);
        }
    }
    SECTION("doubling the target leaves the gradient unchanged")
    {
        const LatentCode z = new_latent(shape, {InitKind::StandardNormal, 2.0, 10});
        const FeatureVector t = toy_text_target("double", 32);
        const Eigen::VectorXd g1 = toy_loss_grad(gen, enc, z, t, CutoutPolicy{}, 2);
        const Eigen::VectorXd g2 = toy_loss_grad(gen, enc, z, FeatureVector(2.0 * t.values), CutoutPolicy{}, 2);
        CHECK((g1 - g2).norm() <= 1e-12 * g1.norm());
    }
    SECTION("vanishes at a converged Adam endpoint")
    {
        CutoutPolicy full;
        full.num_cuts = 1;
        full.min_fraction = full.max_fraction = 1.0;
        const PipelineObjective obj(gen, enc, toy_text_target("a red apple", 32), full);
        AdamState s = AdamState::fresh(flatten(new_latent(shape, {InitKind::StandardNormal, 2.0, 3})), {0.02});
        for (int i = 0; i < 2500; ++i)
            adam_step(s, obj.fitness_and_gradient(unflatten(s.params, shape), 0).loss_gradient);
        const FitnessGradient end = obj.fitness_and_gradient(unflatten(s.params, shape), 0);
        CHECK(end.fitness > 1.0 - 1e-9);
        CHECK(end.loss_gradient.norm() < 1e-5);
    }
}

TEST_CASE("multimodal toy target")
{
    auto gen = std::make_shared<ToyGenerator>();
    auto enc = std::make_shared<ToyEncoder>();
    const CutoutPolicy policy;
    const MultimodalTarget mm = toy_multimodal_target(*gen, *enc, policy);
    REQUIRE(mm.anchors.size() == 4);
    CHECK_THAT(mm.target.values.norm(), WithinAbs(1.0, 1e-12));

    SECTION("deterministic")
    {
        const MultimodalTarget again = toy_multimodal_target(*gen, *enc, policy);
        CHECK(again.target == mm.target);
        CHECK(again.anchors == mm.anchors);
    }
    SECTION("anchors are far apart and already score well")
    {
        const PipelineObjective obj(gen, enc, mm.target, policy);
        const double spread = std::sqrt(2.0 * static_cast<double>(gen->latent_shape().total()));
        for (std::size_t i = 0; i < mm.anchors.size(); ++i) {
            CHECK(obj.fitness(mm.anchors[i], 0) > 0.4);
            for (std::size_t j = i + 1; j < mm.anchors.size(); ++j)
                CHECK((flatten(mm.anchors[i]) - flatten(mm.anchors[j])).norm() > 0.7 * spread);
        }
    }
    SECTION("Adam from two anchors ends high and apart")
    {
        const PipelineObjective obj(gen, enc, mm.target, policy);
        std::vector<Eigen::VectorXd> ends;
        for (std::size_t a = 0; a < 2; ++a) {
            AdamState s = AdamState::fresh(flatten(mm.anchors[a]));
            for (std::uint64_t it = 0; it < 1000; ++it)
                adam_step(s, obj.fitness_and_gradient(unflatten(s.params, gen->latent_shape()), it).loss_gradient);
            CHECK(obj.fitness(unflatten(s.params, gen->latent_shape()), 0) > 0.9);
            ends.push_back(s.params);
        }
        CHECK((ends[0] - ends[1]).norm() > 8.0);
    }
    SECTION("invalid arguments")
    {
        CHECK_THROWS_AS(toy_multimodal_target(*gen, *enc, policy, 0), ConfigError);
        CHECK_THROWS_AS(toy_multimodal_target(*gen, *enc, policy, 5, 7, 4), ConfigError);
    }
}
