#include <latentsearch/experiment/runner.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace latentsearch;
using namespace latentsearch::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("latentsearch-test-experiment") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Three cheap strategies of 20 evaluations each on a small toy pipeline.
const char* small_toml = R"(
name = "small"
text = "a lighthouse at dusk"
master_seed = 5
runs_per_strategy = 5

[cutouts]
num_cuts = 2
resize_to = 16

[[strategy]]
label = "adam"
kind = "adam"
iterations = 20

[[strategy]]
label = "cmaes"
kind = "cmaes"
generations = 4
population = 5

[[strategy]]
label = "hybrid"
kind = "hybrid"
generations = 2
population = 5
k = 1

[evaluation]
perplexity = 2
tsne_iterations = 150
repeats = 3
samples_per_model = 5
)";

ExperimentConfig small_config(const fs::path& out)
{
    ExperimentConfig cfg = parse_config(small_toml);
    cfg.output_dir = out.string();
    return cfg;
}

} // namespace

TEST_CASE("config parsing")
{
    SECTION("defaults")
    {
        const ExperimentConfig cfg = parse_config("text = \"x\"\n");
        CHECK(cfg.name == "experiment");
        CHECK(cfg.runs_per_strategy == 500);
        CHECK(cfg.backend.kind == BackendKind::Toy);
        CHECK_FALSE(cfg.latent_shape.has_value());
        REQUIRE(cfg.strategies.size() == 3);
        for (const auto& s : cfg.strategies)
            CHECK(implied_evaluations(s.kind) == 1000);
        CHECK(cfg.cutouts.num_cuts == 8);
        CHECK(cfg.evaluation.perplexity == 40.0);
        CHECK(cfg.evaluation.repeats == 30);
    }
    SECTION("explicit fields")
    {
        const ExperimentConfig cfg = parse_config(R"(
text = "t"
[latent]
num_hidden_layers = 14
latent_dim = 128
init = "truncated"
truncation = 1.5
[[strategy]]
label = "h2"
kind = "hybrid"
k = 2
learning_rate = 0.1
persist_moments = true
lamarckian = false
)");
        REQUIRE(cfg.latent_shape.has_value());
        CHECK(cfg.latent_shape->total() == 3840);
        CHECK(cfg.init == InitKind::TruncatedNormal);
        CHECK(cfg.truncation == 1.5);
        REQUIRE(cfg.strategies.size() == 1);
        const auto& h = std::get<HybridConfig>(cfg.strategies[0].kind);
        CHECK(h.k == 2);
        CHECK(h.adam.learning_rate == 0.1);
        CHECK(h.persist_moments);
        CHECK_FALSE(h.lamarckian);
        CHECK(implied_evaluations(h) == 50 * 10 * 3);
    }
    SECTION("canonical form round-trips")
    {
        const ExperimentConfig cfg = parse_config(small_toml);
        const std::string canon = canonical_toml(cfg);
        CHECK(canonical_toml(parse_config(canon)) == canon);
        CHECK(config_hash(parse_config(canon)) == config_hash(cfg));
        CHECK(hex64(config_hash(cfg)).size() == 16);
    }
    SECTION("run hash ignores bookkeeping and other strategies")
    {
        ExperimentConfig a = parse_config(small_toml);
        ExperimentConfig b = a;
        b.name = "other";
        b.runs_per_strategy = 50;
        b.parallelism = 4;
        b.evaluation.repeats = 9;
        b.strategies.pop_back();
        CHECK(run_config_hash(a, a.strategies[0]) == run_config_hash(b, b.strategies[0]));
        b.master_seed = 6;
        CHECK(run_config_hash(a, a.strategies[0]) != run_config_hash(b, b.strategies[0]));
        CHECK(run_config_hash(a, a.strategies[0]) != run_config_hash(a, a.strategies[1]));
    }
    SECTION("errors")
    {
        CHECK_THROWS_AS(parse_config("text = \"x\"\nbogus = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[cutouts]\nnum_cut = 3\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = 3\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("name = \"x\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\nruns_per_strategy = -1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[backend]\nkind = \"bridge\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[backend]\nkind = \"bridge\"\nendpoint = \"tcp:h:1\"\ntarget = \"multimodal\"\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[[strategy]]\nkind = \"adam\"\n[[strategy]]\nkind = \"adam\"\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[[strategy]]\nkind = \"adam\"\nlabel = \"reports\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[[strategy]]\nkind = \"sgd\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[evaluation]\nbaseline = \"nope\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\n[latent]\ninit = \"uniform\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("text = \"x\"\nname = \"a/b\"\n"), ConfigError);
        try {
            parse_config("text = \"x\"\nname = \n", "exp.toml");
            FAIL("expected a parse error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).starts_with("exp.toml:2:"));
        }
        CHECK_THROWS_AS(load_config("/nonexistent/latentsearch.toml"), ConfigError);
    }
}

TEST_CASE("experiment runs, resumes and evaluates")
{
    const fs::path out = scratch("sweep");
    const ExperimentConfig cfg = small_config(out);

    const ExperimentResult first = run_experiment(cfg);
    REQUIRE(first.count(RunStatus::Completed) == 15);
    const fs::path exp = out / "small";
    CHECK(first.directory == exp);
    CHECK(fs::exists(exp / "config.toml"));
    for (const auto& s : cfg.strategies)
        for (std::size_t i = 0; i < 5; ++i) {
            const fs::path dir = run_dir(exp, s.label, i);
            CHECK(fs::exists(dir / "trace.csv"));
            CHECK(fs::exists(dir / "latent.txt"));
            CHECK(fs::exists(dir / "final.png"));
            CHECK_FALSE(fs::exists(dir / "manifest.tmp"));
            const auto m = read_manifest(dir);
            REQUIRE(m.has_value());
            CHECK(m->at("status") == "ok");
            CHECK(m->at("evaluations") == 20);
            CHECK(m->at("implied_evaluations") == 20);
            CHECK(m->at("seed") == run_seed(cfg, s.label, i));
            CHECK(load_trace_csv((dir / "trace.csv").string()).size() == 20);
        }

    SECTION("a rerun skips everything")
    {
        const std::string before = slurp(run_dir(exp, "cmaes", 2) / "manifest");
        const ExperimentResult again = run_experiment(cfg);
        CHECK(again.count(RunStatus::Skipped) == 15);
        CHECK(again.count(RunStatus::Completed) == 0);
        CHECK(slurp(run_dir(exp, "cmaes", 2) / "manifest") == before);
    }
    SECTION("more runs execute only the new indices")
    {
        ExperimentConfig more = cfg;
        more.runs_per_strategy = 6;
        const ExperimentResult r = run_experiment(more);
        CHECK(r.count(RunStatus::Skipped) == 15);
        CHECK(r.count(RunStatus::Completed) == 3);
    }
    SECTION("a changed strategy refuses to mix with old runs")
    {
        ExperimentConfig changed = cfg;
        std::get<AdamConfig>(changed.strategies[0].kind).adam.learning_rate = 0.01;
        CHECK_THROWS_AS(run_experiment(changed), ConfigError);
    }
    SECTION("a deleted manifest reruns that run with the same result")
    {
        const fs::path dir = run_dir(exp, "hybrid", 3);
        const std::string trace = slurp(dir / "trace.csv");
        fs::remove(dir / "manifest");
        const ExperimentResult r = run_experiment(cfg);
        CHECK(r.count(RunStatus::Completed) == 1);
        CHECK(slurp(dir / "trace.csv") == trace);
    }
    SECTION("evaluation writes every report")
    {
        const EvaluationOutput ev = evaluate_experiment(exp);
        CHECK(ev.report.baseline_label == best_performing(std::map<std::string, std::vector<double>>{
                                              {"adam", {ev.methods.at("adam").mean_final_fitness}},
                                              {"cmaes", {ev.methods.at("cmaes").mean_final_fitness}},
                                              {"hybrid", {ev.methods.at("hybrid").mean_final_fitness}}}));
        CHECK(ev.report.repeats == 3);
        for (const char* f : {"jaccard.csv", "curves.csv", "summary.json", "grid_adam.png", "grid_cmaes.png",
                              "grid_hybrid.png"})
            CHECK(fs::exists(exp / "reports" / f));
        const Json summary = Json::parse(slurp(exp / "reports" / "summary.json"));
        CHECK(summary.at("methods").at("adam").at("samples") == 5);
        CHECK(summary.at("methods").at("adam").at("failed") == 0);

        const EvaluationOutput forced = evaluate_experiment(exp, "cmaes");
        CHECK(forced.report.baseline_label == "cmaes");
        CHECK(forced.report.method("adam").values.size() == 3);

        std::ostringstream text;
        report(exp, text);
        CHECK(text.str().find("baseline cmaes (argument)") != std::string::npos);
        CHECK(text.str().find("(baseline)") != std::string::npos);

        CHECK_THROWS_AS(evaluate_experiment(exp, "nope"), ConfigError);
    }
}

TEST_CASE("experiment determinism")
{
    const fs::path out = scratch("determinism");
    ExperimentConfig a = small_config(out / "a");
    ExperimentConfig b = small_config(out / "b");
    b.parallelism = 3;
    run_experiment(a);
    run_experiment(b);
    for (const auto& s : a.strategies)
        for (std::size_t i = 0; i < 5; ++i) {
            const std::string ta = slurp(run_dir(experiment_dir(a), s.label, i) / "trace.csv");
            CHECK(ta == slurp(run_dir(experiment_dir(b), s.label, i) / "trace.csv"));
            CHECK(slurp(run_dir(experiment_dir(a), s.label, i) / "latent.txt")
                  == slurp(run_dir(experiment_dir(b), s.label, i) / "latent.txt"));
        }

    ExperimentConfig c = small_config(out / "c");
    c.master_seed = 6;
    run_experiment(c);
    CHECK(slurp(run_dir(experiment_dir(a), "adam", 0) / "trace.csv")
          != slurp(run_dir(experiment_dir(c), "adam", 0) / "trace.csv"));
}

TEST_CASE("identical sample sets overlap completely")
{
    const fs::path out = scratch("identical");
    ExperimentConfig cfg = small_config(out);
    cfg.strategies = {cfg.strategies[1], cfg.strategies[1]};
    cfg.strategies[1].label = "twin";
    run_experiment(cfg);
    const fs::path exp = experiment_dir(cfg);
    fs::remove_all(exp / "twin");
    fs::copy(exp / "cmaes", exp / "twin", fs::copy_options::recursive);
    const EvaluationOutput ev = evaluate_experiment(exp, "cmaes");
    for (double v : ev.report.method("twin").values)
        CHECK(v == 1.0);
}

TEST_CASE("evaluation preconditions")
{
    const fs::path out = scratch("preconditions");
    CHECK_THROWS_AS(evaluate_experiment(out), ConfigError);
    std::ostringstream sink;
    CHECK_THROWS_AS(report(out, sink), ConfigError);

    ExperimentConfig cfg = small_config(out);
    cfg.runs_per_strategy = 4;
    run_experiment(cfg);
    CHECK_THROWS_AS(evaluate_experiment(experiment_dir(cfg)), DegenerateInputError);
}

TEST_CASE("bridge failures are recorded and retried")
{
    const fs::path out = scratch("bridge");
    const std::string server = LATENTSEARCH_FAKE_BRIDGE;
    auto config = [&](const std::string& extra) {
        ExperimentConfig cfg = parse_config(R"(
name = "bridged"
text = "a lighthouse at dusk"
master_seed = 3
runs_per_strategy = 5
[cutouts]
num_cuts = 2
resize_to = 64
[[strategy]]
label = "cmaes"
kind = "cmaes"
generations = 2
population = 4
)");
        cfg.output_dir = out.string();
        cfg.backend.kind = BackendKind::Bridge;
        cfg.backend.endpoint = "stdio:" + server + " --stdio" + extra;
        return cfg;
    };

    // info + encode_text, then 8 evaluations of 3 requests and one render per run.
    const ExperimentResult broken = run_experiment(config(" --fault close-after --close-after 62"));
    CHECK(broken.count(RunStatus::Completed) == 2);
    CHECK(broken.count(RunStatus::Failed) == 3);
    const auto m = read_manifest(run_dir(broken.directory, "cmaes", 4));
    REQUIRE(m.has_value());
    CHECK(m->at("status") == "failed");
    CHECK_FALSE(m->at("error").get<std::string>().empty());

    const ExperimentResult fixed = run_experiment(config(""));
    CHECK(fixed.count(RunStatus::Skipped) == 2);
    CHECK(fixed.count(RunStatus::Completed) == 3);

    // Same traces as an uninterrupted sweep.
    ExperimentConfig clean = config("");
    clean.name = "clean";
    run_experiment(clean);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(slurp(run_dir(fixed.directory, "cmaes", i) / "trace.csv")
              == slurp(run_dir(experiment_dir(clean), "cmaes", i) / "trace.csv"));

    ExperimentConfig adam = config("");
    adam.name = "needs-grad";
    adam.strategies = {{"adam", AdamConfig{5}}};
    CHECK(run_experiment(adam).count(RunStatus::Completed) == 5);
    adam.backend.endpoint += " --fault no-grad";
    adam.name = "no-grad";
    CHECK_THROWS_AS(run_experiment(adam), CapabilityError);
}
