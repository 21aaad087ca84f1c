#include "cli.hpp"

#include <latentsearch/experiment/runner.hpp>
#include <latentsearch/version.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "latentsearch");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = latentsearch::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir)
{
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path path = dir / "exp.toml";
    std::ofstream(path) << R"(name = "cli"
text = "a quiet harbour"
runs_per_strategy = 5

[cutouts]
num_cuts = 2
resize_to = 16

[[strategy]]
label = "adam"
kind = "adam"
iterations = 10

[[strategy]]
label = "cmaes"
kind = "cmaes"
generations = 2
population = 5

[evaluation]
perplexity = 2
tsne_iterations = 100
repeats = 2
samples_per_model = 5
)";
    return path;
}

} // namespace

TEST_CASE("version matches the build")
{
    CHECK(latentsearch::code_version == LATENTSEARCH_PROJECT_VERSION);
    const Outcome v = cli({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out == std::string("latentsearch ") + LATENTSEARCH_PROJECT_VERSION + "\n");
}

TEST_CASE("usage errors exit with 2")
{
    const Outcome none = cli({});
    CHECK(none.code == 2);
    CHECK(none.err.find("run") != std::string::npos);

    CHECK(cli({"frobnicate"}).code == 2);

    const Outcome missing = cli({"run"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("--config") != std::string::npos);

    CHECK(cli({"run", "--config", "/nonexistent/exp.toml"}).code == 2);
    CHECK(cli({"gradcheck", "--probes", "0"}).code == 2);
    CHECK(cli({"evaluate"}).code == 2);
}

TEST_CASE("help goes to stdout with exit 0")
{
    const Outcome top = cli({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("evaluate") != std::string::npos);
    CHECK(top.err.empty());

    const Outcome run = cli({"run", "--help"});
    CHECK(run.code == 0);
    CHECK(run.out.find("--parallelism") != std::string::npos);
}

TEST_CASE("gradcheck prints one line per configuration")
{
    const Outcome g = cli({"gradcheck", "--probes", "3"});
    CHECK(g.code == 0);
    std::istringstream lines(g.out);
    std::string line;
    int passes = 0;
    while (std::getline(lines, line))
        passes += line.starts_with("PASS ");
    CHECK(passes == 4);

    const Outcome strict = cli({"gradcheck", "--probes", "2", "--tolerance", "1e-30"});
    CHECK(strict.code == 1);
    CHECK(strict.out.find("FAIL ") != std::string::npos);
}

TEST_CASE("run, evaluate and report")
{
    const fs::path dir = fs::temp_directory_path() / "latentsearch-test-cli";
    const fs::path config = write_config(dir);
    const std::string output = (dir / "out").string();

    const Outcome run = cli({"run", "--config", config.string(), "--output", output, "--seed", "9"});
    REQUIRE(run.code == 0);
    CHECK(run.out.find("completed 10, skipped 0, failed 0") != std::string::npos);
    const fs::path exp = dir / "out" / "cli";
    CHECK(fs::exists(exp / "cmaes" / "run_0004" / "manifest"));
    CHECK(latentsearch::experiment::load_config((exp / "config.toml").string()).master_seed == 9);

    const Outcome rerun = cli({"run", "--config", config.string(), "--output", output, "--seed", "9"});
    CHECK(rerun.code == 0);
    CHECK(rerun.out.find("completed 0, skipped 10, failed 0") != std::string::npos);

    const Outcome other_seed = cli({"run", "--config", config.string(), "--output", output, "--seed", "10"});
    CHECK(other_seed.code == 1);
    CHECK(other_seed.err.starts_with("error: "));

    CHECK(cli({"report", exp.string()}).code == 1);

    const Outcome ev = cli({"evaluate", exp.string(), "--baseline", "adam"});
    REQUIRE(ev.code == 0);
    CHECK(fs::exists(exp / "reports" / "jaccard.csv"));
    CHECK(ev.out.find("baseline adam (argument)") != std::string::npos);

    const Outcome rep = cli({"report", exp.string()});
    CHECK(rep.code == 0);
    CHECK(rep.out.find("cmaes") != std::string::npos);

    CHECK(cli({"evaluate", exp.string(), "--baseline", "nope"}).code == 1);
}

TEST_CASE("bench on the toy defaults")
{
    const fs::path dir = fs::temp_directory_path() / "latentsearch-test-cli-bench";
    const fs::path config = write_config(dir);
    const Outcome b = cli({"bench", "--config", config.string(), "--evaluations", "3"});
    CHECK(b.code == 0);
    CHECK(b.out.find("fitness + gradient") != std::string::npos);
    CHECK(b.out.find("adam") != std::string::npos);
}
