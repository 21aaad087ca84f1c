#pragma once

#include "../cutouts.hpp"
#include "../errors.hpp"
#include "../latent.hpp"
#include "../random.hpp"
#include "../strategies.hpp"
#include "../text_io.hpp"
#include "../toy_models.hpp"
#include "../version.hpp"

#include <toml.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace latentsearch::experiment {

enum class BackendKind { Toy, Bridge };
enum class TargetKind { Text, Multimodal };

struct BackendConfig {
    BackendKind kind = BackendKind::Toy;
    /// "stdio:<command>" or "tcp:<host>:<port>" (bridge only).
    std::string endpoint;
    TargetKind target = TargetKind::Text;
};

struct ToySettings {
    ToyGeneratorConfig generator;
    ToyEncoderConfig encoder;
    std::size_t multimodal_anchors = 4;
    std::uint64_t multimodal_seed = 7;
    std::size_t multimodal_candidates = 256;
};

struct EvaluationSettings {
    double perplexity = 40.0;
    std::uint64_t tsne_iterations = 1000;
    std::size_t repeats = 30;
    std::size_t samples_per_model = 500;
    std::size_t grid_size = 0; // 0: ceil(sqrt(pooled samples))
    std::uint64_t seed = 0;
    /// Empty: the method with the highest mean final fitness.
    std::string baseline;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string text;
    std::uint64_t master_seed = 0;
    std::string output_dir = "runs";
    std::size_t runs_per_strategy = 500;
    std::size_t parallelism = 1;
    BackendConfig backend;
    /// Unset: the toy generator's shape, or whatever the bridge reports.
    std::optional<LatentShape> latent_shape;
    InitKind init = InitKind::StandardNormal;
    double truncation = 2.0;
    ToySettings toy;
    CutoutPolicy cutouts;
    std::vector<StrategyConfig> strategies = default_strategies();
    EvaluationSettings evaluation;

    void validate() const
    {
        if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..")
            throw ConfigError("experiment name must be a non-empty single path component");
        if (runs_per_strategy < 1)
            throw ConfigError("runs_per_strategy must be >= 1");
        if (parallelism < 1)
            throw ConfigError("parallelism must be >= 1");
        if (backend.kind == BackendKind::Bridge && backend.endpoint.empty())
            throw ConfigError("bridge backend needs an endpoint");
        if (backend.kind == BackendKind::Bridge && backend.target == TargetKind::Multimodal)
            throw ConfigError("the multimodal target is only available on the toy backend");
        if (backend.target == TargetKind::Text && text.empty())
            throw ConfigError("a text target needs non-empty 'text'");
        if (latent_shape)
            latent_shape->validate();
        if (init == InitKind::TruncatedNormal && !(truncation > 0.0))
            throw ConfigError("truncation bound must be > 0");
        cutouts.validate();
        if (strategies.empty())
            throw ConfigError("at least one strategy is required");
        std::set<std::string> labels;
        for (const auto& s : strategies) {
            if (s.label.empty() || s.label.find_first_of("/,\n") != std::string::npos)
                throw ConfigError("strategy label '" + s.label + "' must be non-empty without '/', ',' or newlines");
            if (s.label == "reports")
                throw ConfigError("strategy label 'reports' is reserved");
            if (!labels.insert(s.label).second)
                throw ConfigError("duplicate strategy label '" + s.label + "'");
            std::visit(
                [&](const auto& k) {
                    using T = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<T, AdamConfig>) {
                        if (k.iterations < 1)
                            throw ConfigError("strategy '" + s.label + "': iterations must be >= 1");
                    } else {
                        if (k.generations < 1 || k.population < 2 || !(k.sigma0 > 0.0))
                            throw ConfigError("strategy '" + s.label
                                              + "': needs generations >= 1, population >= 2, sigma0 > 0");
                    }
                },
                s.kind);
        }
        if (!(evaluation.perplexity > 1.0))
            throw ConfigError("evaluation perplexity must be > 1");
        if (evaluation.tsne_iterations < 1 || evaluation.repeats < 2 || evaluation.samples_per_model < 5)
            throw ConfigError("evaluation needs tsne_iterations >= 1, repeats >= 2, samples_per_model >= 5");
        if (!evaluation.baseline.empty() && !labels.contains(evaluation.baseline))
            throw ConfigError("evaluation baseline '" + evaluation.baseline + "' is not a strategy label");
    }
};

namespace detail {

/// Typed, strict access to one TOML table: unknown keys are errors.
class Section {
public:
    Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

    bool has(const char* key) const { return table_ && table_->contains(key); }

    std::string str(const char* key, std::string fallback)
    {
        const toml::node* n = take(key);
        if (!n)
            return fallback;
        if (!n->is_string())
            throw error(key, "a string");
        return n->value<std::string>().value();
    }

    template <typename U>
    U count(const char* key, U fallback)
    {
        const toml::node* n = take(key);
        if (!n)
            return fallback;
        if (!n->is_integer() || n->value<std::int64_t>().value() < 0)
            throw error(key, "a non-negative integer");
        return static_cast<U>(n->value<std::int64_t>().value());
    }

    double real(const char* key, double fallback)
    {
        const toml::node* n = take(key);
        if (!n)
            return fallback;
        if (!n->is_number())
            throw error(key, "a number");
        return n->value<double>().value();
    }

    bool flag(const char* key, bool fallback)
    {
        const toml::node* n = take(key);
        if (!n)
            return fallback;
        if (!n->is_boolean())
            throw error(key, "a boolean");
        return n->value<bool>().value();
    }

    const toml::node* raw(const char* key) { return take(key); }

    void finish() const
    {
        if (!table_)
            return;
        for (const auto& [key, node] : *table_)
            if (!used_.contains(std::string(key.str())))
                throw ConfigError("unknown key '" + where(std::string(key.str())) + "'");
    }

private:
    const toml::node* take(const char* key)
    {
        used_.insert(key);
        return table_ ? table_->get(key) : nullptr;
    }
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    ConfigError error(const char* key, const char* expected) const
    {
        return ConfigError("'" + where(key) + "' must be " + expected);
    }

    const toml::table* table_;
    std::string path_;
    std::set<std::string> used_;
};

inline const toml::table* subtable(Section& parent, const char* key)
{
    const toml::node* n = parent.raw(key);
    if (!n)
        return nullptr;
    if (!n->is_table())
        throw ConfigError("'" + std::string(key) + "' must be a table");
    return n->as_table();
}

inline InitKind parse_init(const std::string& s)
{
    if (s == "normal")
        return InitKind::StandardNormal;
    if (s == "truncated")
        return InitKind::TruncatedNormal;
    if (s == "zeros")
        return InitKind::Zeros;
    throw ConfigError("latent.init must be normal, truncated or zeros, got '" + s + "'");
}

inline std::string init_name(InitKind k)
{
    switch (k) {
    case InitKind::StandardNormal:
        return "normal";
    case InitKind::TruncatedNormal:
        return "truncated";
    case InitKind::Zeros:
        return "zeros";
    }
    return "normal";
}

inline AdamParams parse_adam(Section& s, AdamParams p)
{
    p.learning_rate = s.real("learning_rate", p.learning_rate);
    p.beta1 = s.real("beta1", p.beta1);
    p.beta2 = s.real("beta2", p.beta2);
    p.eps = s.real("eps", p.eps);
    if (!(p.learning_rate >= 0.0) || !(p.beta1 >= 0.0 && p.beta1 < 1.0) || !(p.beta2 >= 0.0 && p.beta2 < 1.0)
        || !(p.eps > 0.0))
        throw ConfigError("Adam needs learning_rate >= 0, 0 <= beta1, beta2 < 1 and eps > 0");
    return p;
}

inline StrategyConfig parse_strategy(const toml::table* t, std::size_t index)
{
    Section s(t, "strategy[" + std::to_string(index) + "]");
    const std::string kind = s.str("kind", "");
    StrategyConfig out;
    out.label = s.str("label", kind);
    if (kind == "adam") {
        AdamConfig c;
        c.iterations = s.count("iterations", c.iterations);
        c.adam = parse_adam(s, c.adam);
        out.kind = c;
    } else if (kind == "cmaes") {
        CmaEsConfig c;
        c.generations = s.count("generations", c.generations);
        c.population = s.count("population", c.population);
        c.sigma0 = s.real("sigma0", c.sigma0);
        out.kind = c;
    } else if (kind == "hybrid") {
        HybridConfig c;
        c.generations = s.count("generations", c.generations);
        c.population = s.count("population", c.population);
        c.sigma0 = s.real("sigma0", c.sigma0);
        c.k = s.count("k", c.k);
        c.adam = parse_adam(s, c.adam);
        c.persist_moments = s.flag("persist_moments", c.persist_moments);
        c.lamarckian = s.flag("lamarckian", c.lamarckian);
        out.kind = c;
    } else {
        throw ConfigError("strategy[" + std::to_string(index) + "].kind must be adam, cmaes or hybrid");
    }
    s.finish();
    return out;
}

inline std::string quote(const std::string& s)
{
    std::ostringstream out;
    out << toml::value<std::string>(s);
    return out.str();
}

} // namespace detail

/// Reads the TOML experiment file format; every field is optional except
/// `text` for text targets, and unknown keys are rejected.
inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>")
{
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
            << e.description();
        throw ConfigError(msg.str());
    }

    ExperimentConfig cfg;
    detail::Section top(&root, "");
    cfg.name = top.str("name", cfg.name);
    cfg.text = top.str("text", cfg.text);
    cfg.master_seed = top.count("master_seed", cfg.master_seed);
    cfg.output_dir = top.str("output_dir", cfg.output_dir);
    cfg.runs_per_strategy = top.count("runs_per_strategy", cfg.runs_per_strategy);
    cfg.parallelism = top.count("parallelism", cfg.parallelism);

    detail::Section backend(detail::subtable(top, "backend"), "backend");
    const std::string kind = backend.str("kind", "toy");
    if (kind == "toy")
        cfg.backend.kind = BackendKind::Toy;
    else if (kind == "bridge")
        cfg.backend.kind = BackendKind::Bridge;
    else
        throw ConfigError("backend.kind must be toy or bridge, got '" + kind + "'");
    cfg.backend.endpoint = backend.str("endpoint", "");
    const std::string target = backend.str("target", "text");
    if (target == "text")
        cfg.backend.target = TargetKind::Text;
    else if (target == "multimodal")
        cfg.backend.target = TargetKind::Multimodal;
    else
        throw ConfigError("backend.target must be text or multimodal, got '" + target + "'");
    backend.finish();

    detail::Section latent(detail::subtable(top, "latent"), "latent");
    if (latent.has("num_hidden_layers") || latent.has("latent_dim"))
        cfg.latent_shape = LatentShape{latent.count<std::size_t>("num_hidden_layers", 14),
                                       latent.count<std::size_t>("latent_dim", 128)};
    cfg.init = detail::parse_init(latent.str("init", "normal"));
    cfg.truncation = latent.real("truncation", cfg.truncation);
    latent.finish();

    detail::Section toy(detail::subtable(top, "toy"), "toy");
    auto& g = cfg.toy.generator;
    auto& e = cfg.toy.encoder;
    g.hidden_width = toy.count("hidden_width", g.hidden_width);
    g.image_size = toy.count("image_size", g.image_size);
    g.seed = toy.count("generator_seed", g.seed);
    g.input_gain = toy.real("input_gain", g.input_gain);
    g.output_gain = toy.real("output_gain", g.output_gain);
    e.feature_dim = toy.count("feature_dim", e.feature_dim);
    e.pool = toy.count("pool", e.pool);
    e.seed = toy.count("encoder_seed", e.seed);
    e.weight_gain = toy.real("weight_gain", e.weight_gain);
    e.bias_scale = toy.real("bias_scale", e.bias_scale);
    cfg.toy.multimodal_anchors = toy.count("multimodal_anchors", cfg.toy.multimodal_anchors);
    cfg.toy.multimodal_seed = toy.count("multimodal_seed", cfg.toy.multimodal_seed);
    cfg.toy.multimodal_candidates = toy.count("multimodal_candidates", cfg.toy.multimodal_candidates);
    toy.finish();

    detail::Section cuts(detail::subtable(top, "cutouts"), "cutouts");
    cfg.cutouts.num_cuts = cuts.count("num_cuts", cfg.cutouts.num_cuts);
    cfg.cutouts.min_fraction = cuts.real("min_fraction", cfg.cutouts.min_fraction);
    cfg.cutouts.max_fraction = cuts.real("max_fraction", cfg.cutouts.max_fraction);
    cfg.cutouts.resize_to = cuts.count("resize_to", cfg.cutouts.resize_to);
    cuts.finish();

    if (const toml::node* list = top.raw("strategy")) {
        const toml::array* arr = list->as_array();
        if (!arr || !arr->is_array_of_tables())
            throw ConfigError("'strategy' must be an array of tables ([[strategy]])");
        cfg.strategies.clear();
        for (std::size_t i = 0; i < arr->size(); ++i)
            cfg.strategies.push_back(detail::parse_strategy(arr->get(i)->as_table(), i));
    }

    detail::Section ev(detail::subtable(top, "evaluation"), "evaluation");
    auto& es = cfg.evaluation;
    es.perplexity = ev.real("perplexity", es.perplexity);
    es.tsne_iterations = ev.count("tsne_iterations", es.tsne_iterations);
    es.repeats = ev.count("repeats", es.repeats);
    es.samples_per_model = ev.count("samples_per_model", es.samples_per_model);
    es.grid_size = ev.count("grid_size", es.grid_size);
    es.seed = ev.count("seed", es.seed);
    es.baseline = ev.str("baseline", es.baseline);
    ev.finish();

    top.finish();
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path);
}

/// Every field written explicitly in a fixed order; parse_config of the
/// result reproduces the config.
inline std::string canonical_toml(const ExperimentConfig& cfg)
{
    using detail::quote;
    auto real = [](double v) { return format_real(v).find_first_of(".eEn") == std::string::npos
                                          ? format_real(v) + ".0"
                                          : format_real(v); };
    std::ostringstream out;
    out << "name = " << quote(cfg.name) << "\n"
        << "text = " << quote(cfg.text) << "\n"
        << "master_seed = " << cfg.master_seed << "\n"
        << "output_dir = " << quote(cfg.output_dir) << "\n"
        << "runs_per_strategy = " << cfg.runs_per_strategy << "\n"
        << "parallelism = " << cfg.parallelism << "\n\n";
    out << "[backend]\n"
        << "kind = " << quote(cfg.backend.kind == BackendKind::Toy ? "toy" : "bridge") << "\n"
        << "endpoint = " << quote(cfg.backend.endpoint) << "\n"
        << "target = " << quote(cfg.backend.target == TargetKind::Text ? "text" : "multimodal") << "\n\n";
    out << "[latent]\n";
    if (cfg.latent_shape)
        out << "num_hidden_layers = " << cfg.latent_shape->num_hidden_layers << "\n"
            << "latent_dim = " << cfg.latent_shape->latent_dim << "\n";
    out << "init = " << quote(detail::init_name(cfg.init)) << "\n"
        << "truncation = " << real(cfg.truncation) << "\n\n";
    const auto& g = cfg.toy.generator;
    const auto& e = cfg.toy.encoder;
    out << "[toy]\n"
        << "hidden_width = " << g.hidden_width << "\n"
        << "image_size = " << g.image_size << "\n"
        << "generator_seed = " << g.seed << "\n"
        << "input_gain = " << real(g.input_gain) << "\n"
        << "output_gain = " << real(g.output_gain) << "\n"
        << "feature_dim = " << e.feature_dim << "\n"
        << "pool = " << e.pool << "\n"
        << "encoder_seed = " << e.seed << "\n"
        << "weight_gain = " << real(e.weight_gain) << "\n"
        << "bias_scale = " << real(e.bias_scale) << "\n"
        << "multimodal_anchors = " << cfg.toy.multimodal_anchors << "\n"
        << "multimodal_seed = " << cfg.toy.multimodal_seed << "\n"
        << "multimodal_candidates = " << cfg.toy.multimodal_candidates << "\n\n";
    out << "[cutouts]\n"
        << "num_cuts = " << cfg.cutouts.num_cuts << "\n"
        << "min_fraction = " << real(cfg.cutouts.min_fraction) << "\n"
        << "max_fraction = " << real(cfg.cutouts.max_fraction) << "\n"
        << "resize_to = " << cfg.cutouts.resize_to << "\n\n";
    out << "[evaluation]\n"
        << "perplexity = " << real(cfg.evaluation.perplexity) << "\n"
        << "tsne_iterations = " << cfg.evaluation.tsne_iterations << "\n"
        << "repeats = " << cfg.evaluation.repeats << "\n"
        << "samples_per_model = " << cfg.evaluation.samples_per_model << "\n"
        << "grid_size = " << cfg.evaluation.grid_size << "\n"
        << "seed = " << cfg.evaluation.seed << "\n"
        << "baseline = " << quote(cfg.evaluation.baseline) << "\n";
    auto adam = [&](const AdamParams& p) {
        out << "learning_rate = " << real(p.learning_rate) << "\n"
            << "beta1 = " << real(p.beta1) << "\n"
            << "beta2 = " << real(p.beta2) << "\n"
            << "eps = " << real(p.eps) << "\n";
    };
    for (const auto& s : cfg.strategies) {
        out << "\n[[strategy]]\n"
            << "label = " << quote(s.label) << "\n"
            << "kind = " << quote(kind_name(s.kind)) << "\n";
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, AdamConfig>) {
                    out << "iterations = " << k.iterations << "\n";
                    adam(k.adam);
                } else {
                    out << "generations = " << k.generations << "\n"
                        << "population = " << k.population << "\n"
                        << "sigma0 = " << real(k.sigma0) << "\n";
                    if constexpr (std::is_same_v<T, HybridConfig>) {
                        out << "k = " << k.k << "\n";
                        adam(k.adam);
                        out << "persist_moments = " << (k.persist_moments ? "true" : "false") << "\n"
                            << "lamarckian = " << (k.lamarckian ? "true" : "false") << "\n";
                    }
                }
            },
            s.kind);
    }
    return out.str();
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg)
{
    return fnv1a64(canonical_toml(cfg));
}

/// Hash of everything in the config that determines the outcome of
/// `strategy`'s runs. Resuming a strategy's runs requires it to match, so
/// adding or editing other strategies leaves existing runs reusable. The bridge
/// endpoint is excluded; the runner compares model identities instead.
inline std::uint64_t run_config_hash(const ExperimentConfig& cfg, const StrategyConfig& strategy)
{
    ExperimentConfig c = cfg;
    c.name = "-";
    c.output_dir = "-";
    c.runs_per_strategy = 1;
    c.parallelism = 1;
    c.evaluation = {};
    c.backend.endpoint = "-";
    c.strategies = {strategy};
    return fnv1a64(canonical_toml(c));
}

inline std::string hex64(std::uint64_t v)
{
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

} // namespace latentsearch::experiment
