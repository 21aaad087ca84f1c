#pragma once

#include "../bridge/client.hpp"
#include "../evaluation.hpp"
#include "../image.hpp"
#include "../latent.hpp"
#include "../objective.hpp"
#include "../parallel.hpp"
#include "../run_record.hpp"
#include "../strategies.hpp"
#include "../toy_models.hpp"
#include "../version.hpp"
#include "config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace latentsearch::experiment {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Backend {
    std::shared_ptr<const Objective> objective;
    std::string description;
};

/// Builds the objective the config describes. On the toy backend the encoder
/// input side follows cutouts.resize_to.
inline Backend make_backend(const ExperimentConfig& cfg)
{
    if (cfg.backend.kind == BackendKind::Toy) {
        ToyGeneratorConfig g = cfg.toy.generator;
        if (cfg.latent_shape)
            g.shape = *cfg.latent_shape;
        ToyEncoderConfig e = cfg.toy.encoder;
        e.input_size = cfg.cutouts.resize_to;
        const auto generator = std::make_shared<const ToyGenerator>(g);
        const auto encoder = std::make_shared<const ToyEncoder>(e);
        FeatureVector target = cfg.backend.target == TargetKind::Multimodal
                                   ? toy_multimodal_target(*generator, *encoder, cfg.cutouts,
                                                           cfg.toy.multimodal_anchors, cfg.toy.multimodal_seed,
                                                           cfg.toy.multimodal_candidates)
                                         .target
                                   : toy_text_target(cfg.text, encoder->feature_dim());
        return {std::make_shared<PipelineObjective>(generator, encoder, std::move(target), cfg.cutouts), "toy"};
    }
    auto client = std::make_shared<bridge::BridgeClient>(bridge::connect_endpoint(cfg.backend.endpoint));
    const bridge::BridgeInfo& info = client->info();
    if (cfg.latent_shape && !(*cfg.latent_shape == info.shape))
        throw ConfigError("configured latent shape (" + std::to_string(cfg.latent_shape->total())
                          + " entries) differs from the bridge's (" + std::to_string(info.shape.total()) + ")");
    FeatureVector target = client->encode_text(cfg.text);
    return {std::make_shared<bridge::BridgeObjective>(client, std::move(target), cfg.cutouts), client->describe()};
}

inline bool needs_gradients(const StrategyKind& kind)
{
    if (std::holds_alternative<AdamConfig>(kind))
        return true;
    if (const auto* h = std::get_if<HybridConfig>(&kind))
        return h->k > 0;
    return false;
}

inline fs::path experiment_dir(const ExperimentConfig& cfg)
{
    return fs::path(cfg.output_dir) / cfg.name;
}

inline fs::path run_dir(const fs::path& experiment, const std::string& label, std::size_t index)
{
    std::ostringstream name;
    name << "run_" << std::setw(4) << std::setfill('0') << index;
    return experiment / label / name.str();
}

inline std::uint64_t run_seed(const ExperimentConfig& cfg, const std::string& label, std::size_t index)
{
    return derive_seed(cfg.master_seed, label, static_cast<std::uint64_t>(index));
}

inline void write_text_atomic(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out)
            throw Error("cannot write '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::optional<Json> read_manifest(const fs::path& dir)
{
    std::ifstream in(dir / "manifest");
    if (!in)
        return std::nullopt;
    try {
        return Json::parse(in);
    } catch (const Json::exception&) {
        return std::nullopt; // unreadable manifests count as absent
    }
}

enum class RunStatus { Completed, Skipped, Failed };

struct RunOutcome {
    std::string strategy;
    std::size_t index = 0;
    std::uint64_t seed = 0;
    RunStatus status = RunStatus::Completed;
    double final_fitness = 0.0;
    std::string error;
};

struct ExperimentResult {
    fs::path directory;
    std::vector<RunOutcome> runs;

    std::size_t count(RunStatus s) const
    {
        return static_cast<std::size_t>(
            std::count_if(runs.begin(), runs.end(), [s](const RunOutcome& r) { return r.status == s; }));
    }
};

/// Executes every (strategy, run index) job not already completed under the
/// same run configuration. Each run directory receives trace.csv, latent.txt,
/// final.png and, last, manifest. Backend failures mark the run failed and the
/// sweep continues.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr)
{
    cfg.validate();
    const Backend backend = make_backend(cfg);
    for (const auto& s : cfg.strategies)
        if (needs_gradients(s.kind) && !backend.objective->differentiable())
            throw CapabilityError("strategy '" + s.label + "' needs gradients; backend '" + backend.description
                                  + "' supports CMA-ES only");

    ExperimentResult result;
    result.directory = experiment_dir(cfg);
    fs::create_directories(result.directory);
    write_text_atomic(result.directory / "config.toml", canonical_toml(cfg));

    struct Job {
        const StrategyConfig* strategy;
        std::size_t index;
        std::uint64_t run_hash;
    };
    std::vector<Job> jobs;
    for (const auto& s : cfg.strategies) {
        const std::uint64_t run_hash = run_config_hash(cfg, s);
        for (std::size_t i = 0; i < cfg.runs_per_strategy; ++i) {
            const fs::path dir = run_dir(result.directory, s.label, i);
            if (const auto m = read_manifest(dir); m && m->value("status", "") == "ok") {
                if (m->value("run_config_hash", "") != hex64(run_hash)
                    || m->value("generator", "") != backend.objective->generator_identity()
                    || m->value("encoder", "") != backend.objective->encoder_identity())
                    throw ConfigError("'" + dir.string()
                                      + "' holds a run from a different configuration or model; use a new output directory");
                result.runs.push_back({s.label, i, run_seed(cfg, s.label, i), RunStatus::Skipped,
                                       m->value("final_fitness", 0.0), ""});
                continue;
            }
            jobs.push_back({&s, i, run_hash});
        }
    }
    if (log)
        *log << "experiment " << result.directory.string() << ": " << jobs.size() << " runs to execute, "
             << result.runs.size() << " already complete\n";

    std::vector<RunOutcome> outcomes(jobs.size());
    std::mutex log_mutex;
    parallel_for(jobs.size(), cfg.parallelism, [&](std::size_t j) {
        const Job& job = jobs[j];
        const StrategyConfig& s = *job.strategy;
        const std::uint64_t seed = run_seed(cfg, s.label, job.index);
        const fs::path dir = run_dir(result.directory, s.label, job.index);
        fs::create_directories(dir);
        fs::remove(dir / "manifest");

        Json manifest{{"strategy", s.label},
                      {"kind", kind_name(s.kind)},
                      {"run_index", job.index},
                      {"seed", seed},
                      {"config_hash", hex64(config_hash(cfg))},
                      {"run_config_hash", hex64(job.run_hash)},
                      {"code_version", std::string(code_version)},
                      {"backend", backend.description},
                      {"generator", backend.objective->generator_identity()},
                      {"encoder", backend.objective->encoder_identity()},
                      {"implied_evaluations", implied_evaluations(s.kind)}};
        RunOutcome& outcome = outcomes[j];
        outcome = {s.label, job.index, seed, RunStatus::Completed, 0.0, ""};
        try {
            const auto objective = backend.objective->with_seed_stream(seed);
            const LatentCode init = new_latent(objective->latent_shape(),
                                               {cfg.init, cfg.truncation, derive_seed(seed, "init")});
            Budget budget(implied_evaluations(s.kind));
            RunRecord record = run_strategy(s, *objective, init, budget, seed);
            record.run_index = job.index;
            save_trace_csv((dir / "trace.csv").string(), record.trace);
            save_latent((dir / "latent.txt").string(), record.final_latent);
            write_png((dir / "final.png").string(), record.final_image);
            manifest["status"] = "ok";
            manifest["evaluations"] = record.evaluations();
            manifest["partial"] = record.partial;
            manifest["final_fitness"] = record.final_fitness;
            manifest["wall_time"] = record.wall_time;
            outcome.final_fitness = record.final_fitness;
        } catch (const Error& e) {
            manifest["status"] = "failed";
            manifest["error"] = e.what();
            outcome.status = RunStatus::Failed;
            outcome.error = e.what();
        }
        write_text_atomic(dir / "manifest", manifest.dump(2) + "\n");
        if (log) {
            const std::lock_guard lock(log_mutex);
            *log << s.label << " " << dir.filename().string() << ": "
                 << (outcome.status == RunStatus::Failed ? "failed: " + outcome.error
                                                         : "fitness " + format_real(outcome.final_fitness))
                 << "\n";
        }
    });
    result.runs.insert(result.runs.end(), outcomes.begin(), outcomes.end());
    return result;
}

struct MethodSummary {
    std::size_t samples = 0; // completed runs used for evaluation
    std::size_t completed = 0;
    std::size_t failed = 0;
    double mean_final_fitness = 0.0;
};

struct EvaluationOutput {
    JaccardReport report;
    CurveTable curves;
    std::map<std::string, MethodSummary> methods;
    fs::path reports_dir;
};

/// Re-renders each completed run's final latent (lossless, unlike the PNG),
/// embeds it with the experiment's encoder and scores occupancy against the
/// baseline. Writes reports/{jaccard.csv, curves.csv, grid_<label>.png,
/// summary.json}.
inline EvaluationOutput evaluate_experiment(const fs::path& dir, const std::string& baseline_arg = "",
                                            std::ostream* log = nullptr)
{
    if (!fs::exists(dir / "config.toml"))
        throw ConfigError("'" + dir.string() + "' is not an experiment directory (no config.toml)");
    const ExperimentConfig cfg = load_config((dir / "config.toml").string());
    const Backend backend = make_backend(cfg);
    const std::string encoder_id = backend.objective->encoder_identity();

    EvaluationOutput out;
    std::map<std::string, std::vector<FeatureVector>> samples;
    std::map<std::string, std::vector<ImageTensor>> images;
    std::map<std::string, std::vector<std::vector<TracePoint>>> traces;
    std::map<std::string, std::vector<double>> finals;
    for (const auto& s : cfg.strategies) {
        MethodSummary& m = out.methods[s.label];
        const fs::path sdir = dir / s.label;
        std::vector<fs::path> runs;
        if (fs::exists(sdir))
            for (const auto& entry : fs::directory_iterator(sdir))
                if (entry.is_directory() && entry.path().filename().string().starts_with("run_"))
                    runs.push_back(entry.path());
        std::sort(runs.begin(), runs.end());
        for (const fs::path& r : runs) {
            const auto manifest = read_manifest(r);
            if (!manifest || manifest->value("status", "") != "ok") {
                ++m.failed;
                continue;
            }
            ++m.completed;
            if (m.samples >= cfg.evaluation.samples_per_model)
                continue;
            if (manifest->value("encoder", "") != encoder_id)
                throw ConfigError("run '" + r.string() + "' was embedded by encoder '"
                                  + manifest->value("encoder", "") + "', not '" + encoder_id
                                  + "'; refusing to pool them");
            const ImageTensor image = backend.objective->render(load_latent((r / "latent.txt").string()));
            samples[s.label].push_back(backend.objective->embed(image));
            images[s.label].push_back(image);
            traces[s.label].push_back(load_trace_csv((r / "trace.csv").string()));
            finals[s.label].push_back(manifest->value("final_fitness", 0.0));
            ++m.samples;
        }
        if (m.samples < 5)
            throw DegenerateInputError("method '" + s.label + "' has " + std::to_string(m.samples)
                                       + " completed runs; evaluation needs at least 5 per method");
        m.mean_final_fitness = mean_of(finals[s.label]);
    }

    std::string baseline = baseline_arg.empty() ? cfg.evaluation.baseline : baseline_arg;
    std::string baseline_source = baseline_arg.empty() ? "config" : "argument";
    if (baseline.empty()) {
        baseline = best_performing(finals);
        baseline_source = "highest mean final fitness";
    }
    if (!samples.contains(baseline))
        throw ConfigError("baseline '" + baseline + "' is not a strategy of this experiment");
    if (log)
        *log << "evaluating " << dir.string() << " against baseline '" << baseline << "' (" << baseline_source
             << ")\n";

    TsneConfig tsne;
    tsne.perplexity = cfg.evaluation.perplexity;
    tsne.iterations = cfg.evaluation.tsne_iterations;
    tsne.seed = cfg.evaluation.seed;
    out.report = evaluate_methods(samples, baseline, tsne, cfg.evaluation.grid_size, cfg.evaluation.repeats,
                                  cfg.parallelism);
    out.curves = fitness_curves(traces);

    out.reports_dir = dir / "reports";
    fs::create_directories(out.reports_dir);
    {
        std::ostringstream csv;
        write_jaccard_csv(csv, out.report);
        write_text_atomic(out.reports_dir / "jaccard.csv", csv.str());
    }
    {
        std::ostringstream csv;
        write_curves_csv(csv, out.curves);
        write_text_atomic(out.reports_dir / "curves.csv", csv.str());
    }
    for (const auto& [label, imgs] : images)
        write_png((out.reports_dir / ("grid_" + label + ".png")).string(),
                  grid_montage(imgs, out.report.details.front().sample_cells.at(label), out.report.grid_size));

    Json summary{{"experiment", cfg.name},
                 {"baseline", baseline},
                 {"baseline_source", baseline_source},
                 {"grid_size", out.report.grid_size},
                 {"repeats", out.report.repeats},
                 {"perplexity", out.report.perplexity},
                 {"tsne_iterations", cfg.evaluation.tsne_iterations},
                 {"encoder", encoder_id},
                 {"warnings", out.report.warnings},
                 {"methods", Json::object()}};
    for (const auto& [label, m] : out.methods) {
        Json entry{{"samples", m.samples},
                   {"completed", m.completed},
                   {"failed", m.failed},
                   {"mean_final_fitness", m.mean_final_fitness},
                   {"mean_occupied_cells", out.report.mean_occupancy(label)}};
        if (label != baseline) {
            const MethodJaccard& j = out.report.method(label);
            entry["jaccard_mean"] = j.mean;
            entry["jaccard_ci95"] = j.half_width_95;
            entry["jaccard_values"] = j.values;
        }
        summary["methods"][label] = entry;
    }
    write_text_atomic(out.reports_dir / "summary.json", summary.dump(2) + "\n");
    return out;
}

/// Human-readable digest of reports/summary.json.
inline void report(const fs::path& dir, std::ostream& out)
{
    std::ifstream in(dir / "reports" / "summary.json");
    if (!in)
        throw ConfigError("no evaluation reports under '" + dir.string() + "'; run evaluate first");
    Json s;
    try {
        s = Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error(std::string("unreadable summary.json: ") + e.what());
    }
    out << "experiment " << s.value("experiment", "?") << ", baseline " << s.value("baseline", "?") << " ("
        << s.value("baseline_source", "?") << "), grid " << s.value("grid_size", 0) << "x"
        << s.value("grid_size", 0) << ", " << s.value("repeats", 0) << " t-SNE repeats\n";
    out << std::left << std::setw(14) << "method" << std::setw(9) << "samples" << std::setw(8) << "failed"
        << std::setw(12) << "fitness" << std::setw(10) << "cells" << "jaccard\n";
    for (const auto& [label, m] : s.at("methods").items()) {
        std::ostringstream fit, cells, jac;
        fit << std::fixed << std::setprecision(4) << m.value("mean_final_fitness", 0.0);
        cells << std::fixed << std::setprecision(1) << m.value("mean_occupied_cells", 0.0);
        if (m.contains("jaccard_mean"))
            jac << std::fixed << std::setprecision(4) << m.value("jaccard_mean", 0.0) << " +- "
                << m.value("jaccard_ci95", 0.0);
        else
            jac << "(baseline)";
        out << std::setw(14) << label << std::setw(9) << m.value("samples", 0) << std::setw(8)
            << m.value("failed", 0) << std::setw(12) << fit.str() << std::setw(10) << cells.str() << jac.str()
            << "\n";
    }
    for (const auto& w : s.value("warnings", std::vector<std::string>{}))
        out << "warning: " << w << "\n";
}

} // namespace latentsearch::experiment
