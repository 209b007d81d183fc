#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>
#include <fstream>
#include <sstream>

#include "segrl/cli.hpp"
#include "segrl/corpus.hpp"

using namespace segrl;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
    fs::path dir;
    std::string bin;

    CliFixture() {
        const char* env = std::getenv("SEGRL_BIN");
        bin = env ? env : "";
        dir = fs::temp_directory_path() /
              ("segrl_cli_" + std::to_string(::getpid()) + "_" +
               std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(dir);
        std::ofstream cfg(dir / "tiny.cfg");
        cfg << "[train]\nlearning_rate = 1.0\nbatch_size = 4\nsteps = 6\n"
               "checkpoint_interval = 3\nseed = 5\ngroup_size = 3\nresample_count = 3\n"
               "[env]\ntask_count = 12\nseries_length = 64\nwindow_count = 4\n";
    }
    ~CliFixture() { fs::remove_all(dir); }

    int run(const std::string& args) const {
        REQUIRE_FALSE(bin.empty());
        const std::string cmd = bin + " " + args + " > " + (dir / "out.log").string() + " 2>&1";
        const int rc = std::system(cmd.c_str());
        return WEXITSTATUS(rc);
    }

    std::string log() const {
        std::ifstream in(dir / "out.log");
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    }

    std::string slurp(const fs::path& p) const {
        std::ifstream in(p);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    }
};

}  // namespace

TEST_CASE("cli gen is byte-deterministic and honors exit codes") {
    const CliFixture fx;
    const std::string cfg = (fx.dir / "tiny.cfg").string();

    CHECK(fx.run("gen --config " + cfg + " --out " + (fx.dir / "a.jsonl").string()) == 0);
    CHECK(fx.run("gen --config " + cfg + " --out " + (fx.dir / "b.jsonl").string()) == 0);
    CHECK(fx.slurp(fx.dir / "a.jsonl") == fx.slurp(fx.dir / "b.jsonl"));

    // corpus header echoes the effective env config
    const Corpus corpus = read_corpus(fx.dir / "a.jsonl");
    CHECK(corpus.header["config"]["env"]["series_length"] == 64);
    CHECK(corpus.header["config"]["env"]["window_count"] == 4);
    CHECK(corpus.tasks.size() == 12);

    // missing output directory
    CHECK(fx.run("gen --config " + cfg + " --out " + (fx.dir / "nodir" / "c.jsonl").string()) ==
          cli::kExitConfig);
    // bad config file
    std::ofstream bad(fx.dir / "bad.cfg");
    bad << "[train]\nunknown_key = 1\n";
    bad.close();
    CHECK(fx.run("gen --config " + (fx.dir / "bad.cfg").string() + " --out " +
                 (fx.dir / "d.jsonl").string()) == cli::kExitConfig);
}

TEST_CASE("cli train, eval, trace round trip at tiny scale") {
    const CliFixture fx;
    const std::string cfg = (fx.dir / "tiny.cfg").string();
    const std::string corpus = (fx.dir / "corpus.jsonl").string();
    const std::string run = (fx.dir / "run").string();

    REQUIRE(fx.run("gen --config " + cfg + " --out " + corpus) == 0);
    REQUIRE(fx.run("train --config " + cfg + " --corpus " + corpus + " --out " + run) == 0);
    CHECK(fs::exists(fs::path(run) / "step_000006.json"));
    CHECK(fs::exists(fs::path(run) / "metrics.jsonl"));

    // metrics: header + one record per step, tagged with the ablation name
    {
        std::ifstream metrics(fs::path(run) / "metrics.jsonl");
        std::string line;
        int lines = 0;
        std::getline(metrics, line);
        CHECK(nlohmann::json::parse(line)["ablation"] == "none");
        while (std::getline(metrics, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 6);
    }

    const std::string ckpt = (fs::path(run) / "step_000006.json").string();
    REQUIRE(fx.run("eval --checkpoint " + ckpt + " --corpus " + corpus + " --out " +
                   (fx.dir / "eval").string()) == 0);
    CHECK(fs::exists(fx.dir / "eval" / "summary.json"));
    CHECK(fs::exists(fx.dir / "eval" / "results.jsonl"));

    // histogram fractions sum to one
    {
        std::ifstream in(fx.dir / "eval" / "summary.json");
        const nlohmann::json summary = nlohmann::json::parse(in);
        double total = 0.0;
        for (const auto& bin : summary["usage_histogram"]) total += bin["fraction"].get<double>();
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }

    REQUIRE(fx.run("trace --checkpoint " + ckpt + " --corpus " + corpus +
                   " --task t0 --out " + (fx.dir / "trace.txt").string()) == 0);
    const std::string dump = fx.log();
    CHECK(dump.find("reward decomposition") != std::string::npos);
    CHECK(dump.find("R_ctl") != std::string::npos);
    {
        // the decomposition must reproduce R_ctl = w_D*D + w_f*F_ctl to 6 decimals
        auto grab = [&](const std::string& key) {
            const std::size_t at = dump.find(key);
            REQUIRE(at != std::string::npos);
            return std::stod(dump.substr(at + key.size()));
        };
        const double f_ctl = grab("F_ctl = ");
        const double d = grab("D = ");
        // the R_ctl result is the number after the last '=' on its line
        const std::size_t rc_at = dump.find("R_ctl");
        REQUIRE(rc_at != std::string::npos);
        const std::size_t eol = dump.find('\n', rc_at);
        const std::size_t last_eq = dump.rfind('=', eol);
        const double r_ctl = std::stod(dump.substr(last_eq + 1));
        const double expected = f_ctl < 0.0 ? -1.0 : 0.9 * d + 0.1 * f_ctl;
        CHECK(std::abs(r_ctl - expected) <= 1e-6);
    }

    // eval with the trajectory audit dump
    REQUIRE(fx.run("eval --checkpoint " + ckpt + " --corpus " + corpus + " --trajectories "
                   "--out " + (fx.dir / "eval_t").string()) == 0);
    {
        std::ifstream in(fx.dir / "eval_t" / "trajectories.jsonl");
        std::string line;
        int lines = 0;
        while (std::getline(in, line))
            if (!line.empty()) {
                const nlohmann::json doc = nlohmann::json::parse(line);
                CHECK(doc.contains("rounds"));
                ++lines;
            }
        CHECK(lines == 12);
    }

    // unknown task id
    CHECK(fx.run("trace --checkpoint " + ckpt + " --corpus " + corpus + " --task bogus") ==
          cli::kExitUnknownTask);

    // corrupt checkpoint: train resume dir sees exit 3, eval sees exit 4
    const fs::path broken_dir = fx.dir / "broken";
    fs::create_directories(broken_dir);
    std::ofstream(broken_dir / "step_000001.json") << "{not json";
    CHECK(fx.run("train --config " + cfg + " --corpus " + corpus + " --out " +
                 broken_dir.string()) == cli::kExitCheckpoint);
    CHECK(fx.run("eval --checkpoint " + (broken_dir / "step_000001.json").string() +
                 " --corpus " + corpus + " --out " + (fx.dir / "eval2").string()) ==
          cli::kExitIncompatible);

    // incompatible checkpoint vs corpus grid
    std::ofstream cfg2(fx.dir / "other.cfg");
    cfg2 << "[train]\nsteps = 1\nbatch_size = 2\ngroup_size = 2\nresample_count = 2\n"
            "[env]\ntask_count = 4\nseries_length = 128\nwindow_count = 8\n";
    cfg2.close();
    const std::string corpus2 = (fx.dir / "corpus2.jsonl").string();
    REQUIRE(fx.run("gen --config " + (fx.dir / "other.cfg").string() + " --out " + corpus2) == 0);
    CHECK(fx.run("eval --checkpoint " + ckpt + " --corpus " + corpus2 + " --out " +
                 (fx.dir / "eval3").string()) == cli::kExitIncompatible);
}

TEST_CASE("cli flag overrides beat environment and config file") {
    const CliFixture fx;
    const std::string cfg = (fx.dir / "tiny.cfg").string();
    const std::string corpus = (fx.dir / "corpus.jsonl").string();
    REQUIRE(fx.run("gen --config " + cfg + " --out " + corpus) == 0);

    // env override changes the seed; flag beats env
    setenv("SEGRL_TRAIN_SEED", "333", 1);
    REQUIRE(fx.run("train --config " + cfg + " --corpus " + corpus + " --steps 2 --out " +
                   (fx.dir / "env_run").string()) == 0);
    REQUIRE(fx.run("train --config " + cfg + " --corpus " + corpus + " --steps 2 --seed 444 "
                   "--out " + (fx.dir / "flag_run").string()) == 0);
    unsetenv("SEGRL_TRAIN_SEED");

    std::ifstream env_metrics(fx.dir / "env_run" / "metrics.jsonl");
    std::string env_header;
    std::getline(env_metrics, env_header);
    CHECK(nlohmann::json::parse(env_header)["config"]["train"]["seed"] == 333);

    std::ifstream flag_metrics(fx.dir / "flag_run" / "metrics.jsonl");
    std::string flag_header;
    std::getline(flag_metrics, flag_header);
    CHECK(nlohmann::json::parse(flag_header)["config"]["train"]["seed"] == 444);

    // ablation flag is echoed into the metrics header
    REQUIRE(fx.run("train --config " + cfg + " --corpus " + corpus +
                   " --steps 1 --ablation myopic_controller --out " +
                   (fx.dir / "ab_run").string()) == 0);
    std::ifstream ab_metrics(fx.dir / "ab_run" / "metrics.jsonl");
    std::string ab_header;
    std::getline(ab_metrics, ab_header);
    CHECK(nlohmann::json::parse(ab_header)["ablation"] == "myopic_controller");
}
