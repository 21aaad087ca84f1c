#pragma once

#include "adam.hpp"
#include "budget.hpp"
#include "cmaes.hpp"
#include "errors.hpp"
#include "latent.hpp"
#include "objective.hpp"
#include "random.hpp"
#include "run_record.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace latentsearch {

/// Gradient descent on the latent. One iteration = one evaluation: the forward
/// pass that produces the gradient is the evaluation that gets recorded.
struct AdamConfig {
    std::uint64_t iterations = 1000;
    AdamParams adam{};
};

struct CmaEsConfig {
    std::uint64_t generations = 100;
    std::size_t population = 10;
    double sigma0 = 0.2;
};

/// CMA-ES whose candidates are each refined by k Adam steps before selection.
/// Per generation: population * (k + 1) evaluations.
struct HybridConfig {
    std::uint64_t generations = 50;
    std::size_t population = 10;
    double sigma0 = 0.2;
    std::uint64_t k = 1;
    AdamParams adam{};
    /// Keep each population slot's Adam moments across generations.
    bool persist_moments = false;
    /// Tell CMA-ES the refined vectors (true) or the raw samples with refined losses (false).
    bool lamarckian = true;
};

using StrategyKind = std::variant<AdamConfig, CmaEsConfig, HybridConfig>;

struct StrategyConfig {
    std::string label;
    StrategyKind kind;
};

inline std::string kind_name(const StrategyKind& kind)
{
    struct Visitor {
        std::string operator()(const AdamConfig&) const { return "adam"; }
        std::string operator()(const CmaEsConfig&) const { return "cmaes"; }
        std::string operator()(const HybridConfig&) const { return "hybrid"; }
    };
    return std::visit(Visitor{}, kind);
}

inline std::uint64_t implied_evaluations(const StrategyKind& kind)
{
    struct Visitor {
        std::uint64_t operator()(const AdamConfig& c) const { return c.iterations; }
        std::uint64_t operator()(const CmaEsConfig& c) const { return c.generations * c.population; }
        std::uint64_t operator()(const HybridConfig& c) const { return c.generations * c.population * (c.k + 1); }
    };
    return std::visit(Visitor{}, kind);
}

/// Default comparison set: every strategy spends 1000 evaluations.
inline std::vector<StrategyConfig> default_strategies()
{
    return {{"adam", AdamConfig{}}, {"cmaes", CmaEsConfig{}}, {"hybrid", HybridConfig{}}};
}

namespace detail {

class RunClock {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline RunRecord finish_run(const Objective& objective, TraceRecorder& recorder, const LatentCode& fallback,
                            bool partial, const RunClock& clock)
{
    RunRecord record;
    record.partial = partial;
    if (recorder.empty()) {
        record.final_latent = fallback;
    } else {
        record.final_latent = recorder.best_latent();
        record.final_fitness = recorder.best_fitness();
    }
    record.final_image = objective.render(record.final_latent);
    record.trace = recorder.take_trace();
    record.wall_time = clock.seconds();
    return record;
}

inline void require_gradients(const Objective& objective, const char* strategy)
{
    if (!objective.differentiable())
        throw CapabilityError(std::string(strategy)
                              + " needs a differentiable backend; this backend supports CMA-ES only");
}

} // namespace detail

inline RunRecord run_adam(const Objective& objective, const LatentCode& init, const AdamConfig& config,
                          Budget& budget)
{
    detail::require_gradients(objective, "Adam");
    const detail::RunClock clock;
    const LatentShape shape = objective.latent_shape();
    AdamState state = AdamState::fresh(flatten(init), config.adam);
    TraceRecorder recorder;
    bool partial = false;
    for (std::uint64_t it = 0; it < config.iterations; ++it) {
        if (!budget.can_afford(1)) {
            partial = true;
            break;
        }
        budget.consume(1);
        const LatentCode latent = unflatten(state.params, shape);
        const FitnessGradient fg = objective.fitness_and_gradient(latent, it);
        recorder.record(fg.fitness, latent);
        adam_step(state, fg.loss_gradient);
    }
    return detail::finish_run(objective, recorder, init, partial, clock);
}

inline RunRecord run_cmaes(const Objective& objective, const LatentCode& init, const CmaEsConfig& config,
                           Budget& budget, std::uint64_t seed)
{
    const detail::RunClock clock;
    const LatentShape shape = objective.latent_shape();
    CmaState state = cma_init(shape.total(), flatten(init), config.sigma0, config.population);
    TraceRecorder recorder;
    bool partial = false;
    std::vector<double> losses(config.population);
    for (std::uint64_t g = 0; g < config.generations; ++g) {
        if (!budget.can_afford(config.population)) {
            partial = true;
            break;
        }
        const auto candidates = cma_ask(state, derive_seed(seed, "ask", g));
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            budget.consume(1);
            const LatentCode latent = unflatten(candidates[i], shape);
            const double fit = objective.fitness(latent, g);
            recorder.record(fit, latent);
            losses[i] = -fit;
        }
        cma_tell(state, candidates, losses);
    }
    return detail::finish_run(objective, recorder, init, partial, clock);
}

inline RunRecord run_hybrid(const Objective& objective, const LatentCode& init, const HybridConfig& config,
                            Budget& budget, std::uint64_t seed)
{
    if (config.k > 0)
        detail::require_gradients(objective, "Hybrid");
    const detail::RunClock clock;
    const LatentShape shape = objective.latent_shape();
    CmaState state = cma_init(shape.total(), flatten(init), config.sigma0, config.population);
    TraceRecorder recorder;
    bool partial = false;
    const std::uint64_t per_generation = config.population * (config.k + 1);
    std::vector<std::optional<AdamState>> slots(config.population);
    std::vector<Eigen::VectorXd> refined(config.population);
    std::vector<double> losses(config.population);

    for (std::uint64_t g = 0; g < config.generations; ++g) {
        if (!budget.can_afford(per_generation)) {
            partial = true;
            break;
        }
        const auto candidates = cma_ask(state, derive_seed(seed, "ask", g));
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            AdamState adam = AdamState::fresh(candidates[i], config.adam);
            if (config.persist_moments && slots[i]) {
                adam = *slots[i];
                adam.params = candidates[i];
            }
            for (std::uint64_t step = 0; step < config.k; ++step) {
                budget.consume(1);
                const LatentCode latent = unflatten(adam.params, shape);
                const FitnessGradient fg = objective.fitness_and_gradient(latent, g);
                recorder.record(fg.fitness, latent);
                adam_step(adam, fg.loss_gradient);
            }
            budget.consume(1);
            const LatentCode latent = unflatten(adam.params, shape);
            const double fit = objective.fitness(latent, g);
            recorder.record(fit, latent);
            losses[i] = -fit;
            refined[i] = adam.params;
            if (config.persist_moments)
                slots[i] = std::move(adam);
        }
        cma_tell(state, config.lamarckian ? refined : candidates, losses);
    }
    return detail::finish_run(objective, recorder, init, partial, clock);
}

inline RunRecord run_strategy(const StrategyConfig& strategy, const Objective& objective, const LatentCode& init,
                              Budget& budget, std::uint64_t seed)
{
    RunRecord record = std::visit(
        [&](const auto& cfg) -> RunRecord {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, AdamConfig>)
                return run_adam(objective, init, cfg, budget);
            else if constexpr (std::is_same_v<T, CmaEsConfig>)
                return run_cmaes(objective, init, cfg, budget, seed);
            else
                return run_hybrid(objective, init, cfg, budget, seed);
        },
        strategy.kind);
    record.strategy = strategy.label;
    record.seed = seed;
    return record;
}

} // namespace latentsearch
