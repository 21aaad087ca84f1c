// Acceptance gate: one PASS/FAIL line per primary criterion. Thresholds and
// run counts are fixed here; the exit status is nonzero if any line fails.

#include <latentsearch/cmaes.hpp>
#include <latentsearch/experiment/runner.hpp>
#include <latentsearch/gradcheck.hpp>
#include <latentsearch/grid.hpp>
#include <latentsearch/parallel.hpp>
#include <latentsearch/stats.hpp>
#include <latentsearch/strategies.hpp>
#include <latentsearch/toy_models.hpp>
#include <latentsearch/tsne.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace latentsearch;
using namespace latentsearch::experiment;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Verdict()>& check)
{
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !v.pass;
    std::ostringstream line;
    line << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << std::fixed << std::setprecision(1)
         << secs << " s]";
    std::cout << line.str() << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "latentsearch-acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::size_t workers()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

Verdict budget_exactness()
{
    constexpr double max_seconds = 10.0;
    ExperimentConfig cfg;
    cfg.text = "A painting of Superman by Van Gogh";
    const Backend backend = make_backend(cfg);
    std::ostringstream detail;
    bool ok = true;
    for (const StrategyConfig& s : default_strategies()) {
        Budget budget(1000);
        const auto t0 = std::chrono::steady_clock::now();
        const LatentCode init = new_latent(backend.objective->latent_shape(), {InitKind::StandardNormal, 2.0, 1});
        const RunRecord r = run_strategy(s, *backend.objective->with_seed_stream(1), init, budget, 1);
        const double secs = seconds_since(t0);
        ok = ok && r.evaluations() == 1000 && budget.used() == 1000 && !r.partial && secs < max_seconds;
        detail << s.label << " " << r.evaluations() << " evals in " << std::setprecision(3) << secs << " s; ";
    }
    detail << "required exactly 1000 and < " << max_seconds << " s per run";
    return {ok, detail.str()};
}

Verdict gradient_oracle()
{
    constexpr double tolerance = 1e-4;
    constexpr double max_seconds = 30.0;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream detail;
    for (const GradcheckCase& c : default_gradcheck_cases()) {
        const GradcheckResult r = run_gradcheck(c, 20, 0, 1e-5, tolerance);
        ok = ok && r.passed && r.probe_errors.size() == 20 && r.max_relative_error < tolerance;
        detail << c.name << " " << std::scientific << std::setprecision(2) << r.max_relative_error << "; ";
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < max_seconds;
    detail << "20 probes each, step 1e-5, required max relative error < 1e-4 within 30 s";
    return {ok, detail.str()};
}

/// Best loss reached by CMA-ES within `generations`, stopping once below `goal`.
double cma_best(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& mean0,
                double sigma0, std::uint64_t generations, double goal, std::uint64_t seed)
{
    CmaState s = cma_init(static_cast<std::size_t>(mean0.size()), mean0, sigma0, 10);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> losses(10);
    for (std::uint64_t g = 0; g < generations && best >= goal; ++g) {
        const auto xs = cma_ask(s, derive_seed(seed, "ask", g));
        for (std::size_t i = 0; i < xs.size(); ++i) {
            losses[i] = f(xs[i]);
            best = std::min(best, losses[i]);
        }
        cma_tell(s, xs, losses);
    }
    return best;
}

Verdict cmaes_convergence()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto sphere = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    const auto rosenbrock = [](const Eigen::VectorXd& x) {
        double f = 0.0;
        for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
            f += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
        return f;
    };
    int sphere_ok = 0, rosen_ok = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        sphere_ok += cma_best(sphere, Eigen::VectorXd::Ones(10), 0.5, 1000, 1e-10, derive_seed(1, "sphere", trial)) < 1e-10;
        rosen_ok += cma_best(rosenbrock, Eigen::VectorXd::Zero(5), 0.5, 3000, 1e-8, derive_seed(1, "rosenbrock", trial)) < 1e-8;
    }
    const double secs = seconds_since(t0);
    std::ostringstream detail;
    detail << "sphere D=10 " << sphere_ok << "/20 (need 19), Rosenbrock D=5 " << rosen_ok
           << "/20 (need 18), within 120 s";
    return {sphere_ok >= 19 && rosen_ok >= 18 && secs < 120.0, detail.str()};
}

Verdict cmaes_rank_invariance()
{
    Rng rng(2024);
    int identical = 0;
    CmaState a = cma_init(12, Eigen::VectorXd::Constant(12, 0.3), 0.6, 10);
    CmaState b = a;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto xs = cma_ask(a, derive_seed(3, "rank", t));
        if (!(xs == cma_ask(b, derive_seed(3, "rank", t))))
            break;
        std::vector<double> la, lb;
        for (const auto& x : xs) {
            la.push_back(x.squaredNorm() + rng.uniform(-1.0, 1.0));
            lb.push_back(std::pow(la.back(), 3) + 5.0);
        }
        cma_tell(a, xs, la);
        cma_tell(b, xs, lb);
        identical += a == b;
    }
    return {identical == 100, std::to_string(identical) + "/100 tells left bit-identical states under loss^3 + 5"};
}

Verdict jaccard_oracle()
{
    Rng rng(77);
    int exact = 0;
    for (int pair = 0; pair < 200; ++pair) {
        const int g = 1 + static_cast<int>(rng.below(12));
        const double density_a = rng.uniform(), density_b = rng.uniform();
        std::vector<bool> in_a(static_cast<std::size_t>(g * g)), in_b(in_a.size());
        GridOccupancy a{static_cast<std::size_t>(g), {}, "a"}, b{static_cast<std::size_t>(g), {}, "b"};
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) {
                const auto k = static_cast<std::size_t>(r * g + c);
                in_a[k] = rng.uniform() < density_a;
                in_b[k] = rng.uniform() < density_b;
                if (in_a[k])
                    a.cells.insert({r, c});
                if (in_b[k])
                    b.cells.insert({r, c});
            }
        if (a.cells.empty())
            a.cells.insert({0, 0}), in_a[0] = true;
        std::size_t both = 0, either = 0;
        for (std::size_t k = 0; k < in_a.size(); ++k) {
            both += in_a[k] && in_b[k];
            either += in_a[k] || in_b[k];
        }
        exact += jaccard_index(a, b) == static_cast<double>(both) / static_cast<double>(either);
    }
    return {exact == 200, std::to_string(exact) + "/200 pairs equal the cell-enumeration oracle exactly"};
}

Verdict tsne_calibration()
{
    constexpr double target = 40.0;
    constexpr double tolerance = 1e-5;
    std::size_t calibrated = 0, kl_decreased = 0;
    double worst = 0.0;
    std::mutex mutex;
    parallel_for(300, workers(), [&](std::size_t set) {
        Rng rng(derive_seed(11, "tsne-set", set));
        std::vector<FeatureVector> features;
        for (int i = 0; i < 200; ++i) {
            Eigen::VectorXd v(32);
            for (Eigen::Index k = 0; k < 32; ++k)
                v[k] = rng.normal();
            features.emplace_back(v);
        }
        const Affinities aff = calibrate_affinities(features, target);
        // Perplexity recomputed from the conditional rows: exp(-sum p ln p).
        double set_worst = 0.0;
        for (Eigen::Index i = 0; i < aff.conditional.rows(); ++i) {
            double h = 0.0;
            for (Eigen::Index j = 0; j < aff.conditional.cols(); ++j)
                if (const double p = aff.conditional(i, j); p > 0.0)
                    h -= p * std::log(p);
            set_worst = std::max(set_worst, std::abs(std::exp(h) - target));
        }
        TsneConfig cfg;
        cfg.perplexity = target;
        cfg.seed = set;
        const TsneResult r = tsne_run(aff, cfg);
        const bool decreased = r.kl_at(cfg.iterations) < r.kl_at(50);
        const std::lock_guard lock(mutex);
        worst = std::max(worst, set_worst);
        calibrated += set_worst <= tolerance;
        kl_decreased += decreased;
    });
    std::ostringstream detail;
    detail << "N=200 F=32 perplexity 40: " << calibrated << "/300 sets with every row within 1e-5 (worst "
           << std::scientific << std::setprecision(2) << worst << "), KL(final) < KL(50) in " << kl_decreased
           << "/300";
    return {calibrated == 300 && kl_decreased == 300, detail.str()};
}

// Scaled replication and fitness-curve checks share one experiment.

struct Replication {
    fs::path dir;
    ExperimentConfig cfg;
    EvaluationOutput evaluation;
    double seconds = 0.0;
};

Replication run_replication()
{
    Replication rep;
    rep.cfg.name = "replication";
    rep.cfg.output_dir = scratch("replication").string();
    rep.cfg.master_seed = 42;
    rep.cfg.runs_per_strategy = 50;
    rep.cfg.parallelism = workers();
    rep.cfg.backend.target = TargetKind::Multimodal;
    rep.cfg.evaluation.samples_per_model = 50;
    rep.cfg.evaluation.repeats = 30;
    rep.cfg.evaluation.seed = 1;
    rep.cfg.evaluation.baseline = "adam";
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult r = run_experiment(rep.cfg);
    if (r.count(RunStatus::Completed) != 150)
        throw Error("replication sweep completed " + std::to_string(r.count(RunStatus::Completed)) + "/150 runs");
    rep.dir = r.directory;
    rep.evaluation = evaluate_experiment(rep.dir);
    rep.seconds = seconds_since(t0);
    return rep;
}

Verdict scaled_replication(const Replication& rep)
{
    const JaccardReport& j = rep.evaluation.report;
    int both = 0;
    for (const EvaluationRepeat& d : j.details) {
        const auto& adam = d.occupancy.at("adam").cells;
        const auto& cma = d.occupancy.at("cmaes").cells;
        bool hits_adam_only = false, hits_cma_only = false;
        for (const Cell& c : d.occupancy.at("hybrid").cells) {
            hits_adam_only = hits_adam_only || (adam.contains(c) && !cma.contains(c));
            hits_cma_only = hits_cma_only || (cma.contains(c) && !adam.contains(c));
        }
        both += hits_adam_only && hits_cma_only;
    }
    const double occ_adam = j.mean_occupancy("adam");
    const double occ_cma = j.mean_occupancy("cmaes");
    std::ostringstream detail;
    detail << "50 runs/strategy, 30 repeats, G=" << j.grid_size << ": mean occupied cells Adam "
           << std::fixed << std::setprecision(2) << occ_adam << ", CMA-ES " << occ_cma << ", Hybrid "
           << j.mean_occupancy("hybrid") << "; Hybrid meets both exclusive regions in " << both
           << "/30 (need 25); Jaccard vs Adam: CMA-ES " << std::setprecision(4) << j.method("cmaes").mean
           << ", Hybrid " << j.method("hybrid").mean << "; " << std::setprecision(0) << rep.seconds
           << " s (limit 900)";
    return {j.repeats == 30 && occ_cma > occ_adam && both >= 25 && rep.seconds < 900.0, detail.str()};
}

Verdict fitness_ordering(const Replication& rep)
{
    const auto& m = rep.evaluation.methods;
    const double hybrid = m.at("hybrid").mean_final_fitness;
    const double cma = m.at("cmaes").mean_final_fitness;

    // Independent recomputation of every curve point's half-width from the traces.
    double worst = 0.0;
    bool counts_ok = true;
    for (const CurveSeries& s : rep.evaluation.curves.series) {
        counts_ok = counts_ok && s.runs == rep.cfg.runs_per_strategy && s.half_width.has_value();
        std::vector<std::vector<TracePoint>> traces;
        for (std::size_t i = 0; i < rep.cfg.runs_per_strategy; ++i)
            traces.push_back(load_trace_csv((run_dir(rep.dir, s.label, i) / "trace.csv").string()));
        for (int p = 0; p <= 100; ++p) {
            std::vector<double> col;
            for (const auto& t : traces) {
                const auto l = t.size();
                const std::size_t e = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p * static_cast<double>(l) / 100.0)));
                col.push_back(t[e - 1].best_fitness);
            }
            const double n = static_cast<double>(col.size());
            double mean = 0.0;
            for (double v : col)
                mean += v;
            mean /= n;
            double ss = 0.0;
            for (double v : col)
                ss += (v - mean) * (v - mean);
            const double hw = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
            worst = std::max({worst, std::abs(hw - (*s.half_width)[static_cast<std::size_t>(p)]),
                              std::abs(mean - s.mean[static_cast<std::size_t>(p)])});
        }
    }
    std::ostringstream detail;
    detail << "mean final best fitness Hybrid " << std::fixed << std::setprecision(4) << hybrid << " vs CMA-ES "
           << cma << " (Adam " << m.at("adam").mean_final_fitness << "); curve CI from " << rep.cfg.runs_per_strategy
           << " runs, max deviation from 1.96 s/sqrt(n) " << std::scientific << std::setprecision(1) << worst
           << " (limit 1e-12)";
    return {hybrid >= cma && counts_ok && worst <= 1e-12, detail.str()};
}

Verdict determinism()
{
    const fs::path root = scratch("determinism");
    auto config = [&](const std::string& sub) {
        ExperimentConfig cfg;
        cfg.name = "determinism";
        cfg.text = "A painting of Superman by Van Gogh";
        cfg.master_seed = 1234;
        cfg.runs_per_strategy = 2;
        cfg.parallelism = workers();
        cfg.output_dir = (root / sub).string();
        return cfg;
    };
    const ExperimentConfig a = config("a");
    const ExperimentConfig b = config("b");
    run_experiment(a);
    run_experiment(b);
    std::size_t compared = 0, identical = 0;
    for (const auto& s : a.strategies)
        for (std::size_t i = 0; i < a.runs_per_strategy; ++i) {
            const std::string ta = slurp(run_dir(experiment_dir(a), s.label, i) / "trace.csv");
            const std::string tb = slurp(run_dir(experiment_dir(b), s.label, i) / "trace.csv");
            ++compared;
            identical += !ta.empty() && ta == tb;
        }
    return {compared == 6 && identical == compared,
            std::to_string(identical) + "/" + std::to_string(compared)
                + " trace CSVs byte-identical across two toy experiments with master seed 1234"};
}

} // namespace

int main()
{
    std::cout << "latentsearch acceptance" << std::endl;
    criterion("budget exactness", budget_exactness);
    criterion("gradient oracle", gradient_oracle);
    criterion("CMA-ES convergence", cmaes_convergence);
    criterion("CMA-ES rank invariance", cmaes_rank_invariance);
    criterion("Jaccard oracle", jaccard_oracle);
    criterion("t-SNE calibration", tsne_calibration);

    std::optional<Replication> rep;
    std::string rep_error;
    try {
        rep = run_replication();
    } catch (const std::exception& e) {
        rep_error = e.what();
    }
    criterion("scaled replication", [&] { return rep ? scaled_replication(*rep) : Verdict{false, rep_error}; });
    criterion("fitness-curve ordering", [&] { return rep ? fitness_ordering(*rep) : Verdict{false, rep_error}; });
    criterion("determinism", determinism);

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
