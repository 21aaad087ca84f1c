#include "cli.hpp"

#include <latentsearch/experiment/runner.hpp>
#include <latentsearch/gradcheck.hpp>
#include <latentsearch/version.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>

namespace latentsearch::cli {

namespace {

using namespace latentsearch::experiment;

struct RunOverrides {
    std::string config_path;
    std::optional<std::string> name, text, output, backend, endpoint, target;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs, parallelism;
};

ExperimentConfig resolve(const RunOverrides& o)
{
    ExperimentConfig cfg = load_config(o.config_path);
    if (o.name)
        cfg.name = *o.name;
    if (o.text)
        cfg.text = *o.text;
    if (o.output)
        cfg.output_dir = *o.output;
    if (o.backend)
        cfg.backend.kind = *o.backend == "bridge" ? BackendKind::Bridge : BackendKind::Toy;
    if (o.endpoint)
        cfg.backend.endpoint = *o.endpoint;
    if (o.target)
        cfg.backend.target = *o.target == "multimodal" ? TargetKind::Multimodal : TargetKind::Text;
    if (o.seed)
        cfg.master_seed = *o.seed;
    if (o.runs)
        cfg.runs_per_strategy = *o.runs;
    if (o.parallelism)
        cfg.parallelism = *o.parallelism;
    cfg.validate();
    return cfg;
}

int cmd_run(const RunOverrides& o, std::ostream& out)
{
    const ExperimentConfig cfg = resolve(o);
    const ExperimentResult r = run_experiment(cfg, &out);
    out << "completed " << r.count(RunStatus::Completed) << ", skipped " << r.count(RunStatus::Skipped)
        << ", failed " << r.count(RunStatus::Failed) << " -> " << r.directory.string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& dir, const std::string& baseline, std::ostream& out)
{
    const EvaluationOutput e = evaluate_experiment(dir, baseline, &out);
    out << "reports written to " << e.reports_dir.string() << "\n";
    report(dir, out);
    return 0;
}

int cmd_gradcheck(std::size_t probes, std::uint64_t seed, double tolerance, std::ostream& out)
{
    bool all = true;
    for (const GradcheckCase& c : default_gradcheck_cases()) {
        const GradcheckResult r = run_gradcheck(c, probes, seed, 1e-5, tolerance);
        out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(26) << r.name << " probes "
            << r.probe_errors.size() << "  max relative error " << format_real(r.max_relative_error) << "\n";
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

int cmd_bench(const std::optional<std::string>& config_path, std::size_t evaluations, std::ostream& out)
{
    ExperimentConfig cfg;
    cfg.text = "benchmark";
    if (config_path)
        cfg = load_config(*config_path);
    const Backend backend = make_backend(cfg);
    const Objective& objective = *backend.objective;
    const LatentCode z = new_latent(objective.latent_shape(), {InitKind::StandardNormal, 2.0, 1});
    using clock = std::chrono::steady_clock;
    auto per_call = [&](auto&& fn) {
        const auto t0 = clock::now();
        for (std::size_t i = 0; i < evaluations; ++i)
            fn(i);
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count()
               / static_cast<double>(evaluations);
    };
    out << "backend " << backend.description << ", latent " << objective.latent_shape().total() << " entries, "
        << objective.cutouts().num_cuts << " cuts\n";
    out << "fitness            " << format_real(per_call([&](std::size_t i) { (void)objective.fitness(z, i); }))
        << " ms\n";
    if (objective.differentiable())
        out << "fitness + gradient "
            << format_real(per_call([&](std::size_t i) { (void)objective.fitness_and_gradient(z, i); })) << " ms\n";
    for (const StrategyConfig& s : cfg.strategies) {
        if (needs_gradients(s.kind) && !objective.differentiable())
            continue;
        Budget budget(implied_evaluations(s.kind));
        const RunRecord r = run_strategy(s, *objective.with_seed_stream(7), z, budget, 7);
        out << std::left << std::setw(19) << s.label << format_real(r.wall_time) << " s for " << r.evaluations()
            << " evaluations, final fitness " << format_real(r.final_fitness) << "\n";
    }
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Latent-space search with Adam, CMA-ES and a hybrid, plus occupancy-based diversity evaluation"};
    app.name("latentsearch");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(code_version));

    RunOverrides run;
    CLI::App* run_cmd = app.add_subcommand("run", "execute an experiment (resumable)");
    run_cmd->add_option("--config", run.config_path, "experiment TOML file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--name", run.name, "override: experiment name");
    run_cmd->add_option("--text", run.text, "override: target text");
    run_cmd->add_option("--seed", run.seed, "override: master seed");
    run_cmd->add_option("--runs", run.runs, "override: runs per strategy");
    run_cmd->add_option("--output", run.output, "override: output directory");
    run_cmd->add_option("--parallelism", run.parallelism, "override: worker count");
    run_cmd->add_option("--backend", run.backend, "override: toy or bridge")->check(CLI::IsMember({"toy", "bridge"}));
    run_cmd->add_option("--endpoint", run.endpoint, "override: bridge endpoint (stdio:<cmd> or tcp:<host>:<port>)");
    run_cmd->add_option("--target", run.target, "override: text or multimodal")
        ->check(CLI::IsMember({"text", "multimodal"}));

    std::string eval_dir, baseline;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "t-SNE occupancy and Jaccard reports for an experiment");
    eval_cmd->add_option("dir", eval_dir, "experiment directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--baseline", baseline, "baseline strategy label (default: config, else best fitness)");

    std::string report_dir;
    CLI::App* report_cmd = app.add_subcommand("report", "print the evaluation summary of an experiment");
    report_cmd->add_option("dir", report_dir, "experiment directory")->required()->check(CLI::ExistingDirectory);

    std::size_t probes = 20;
    std::uint64_t gc_seed = 0;
    double tolerance = 1e-4;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "toy analytic gradients vs central finite differences");
    gc_cmd->add_option("--probes", probes, "random probes per configuration")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--seed", gc_seed, "probe seed");
    gc_cmd->add_option("--tolerance", tolerance, "max relative error allowed")->check(CLI::PositiveNumber);

    std::optional<std::string> bench_config;
    std::size_t bench_evals = 200;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time objective evaluations and one run per strategy");
    bench_cmd->add_option("--config", bench_config, "experiment TOML file (default: toy defaults)")
        ->check(CLI::ExistingFile);
    bench_cmd->add_option("--evaluations", bench_evals, "timed evaluations per measurement")
        ->check(CLI::PositiveNumber);

    auto active_help = [&] {
        const CLI::App* sub = nullptr;
        for (const CLI::App* s : app.get_subcommands())
            sub = s;
        return sub ? sub->help() : app.help();
    };
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << active_help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "latentsearch " << code_version << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << active_help();
        return 2;
    }

    try {
        if (*run_cmd)
            return cmd_run(run, out);
        if (*eval_cmd)
            return cmd_evaluate(eval_dir, baseline, out);
        if (*report_cmd) {
            report(report_dir, out);
            return 0;
        }
        if (*gc_cmd)
            return cmd_gradcheck(probes, gc_seed, tolerance, out);
        return cmd_bench(bench_config, bench_evals, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace latentsearch::cli
