#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
    const std::string cmd = std::string(GLADIUS_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<double> csv_numbers(const std::string& line) {
    std::vector<double> out;
    std::istringstream in(line);
    for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell.empty() ? std::nan("") : std::stod(cell));
    return out;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / ("gladius_cli_" + std::string(info->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string out(const fs::path& sub = {}) const { return " --output-dir " + (dir / sub).string(); }
    fs::path write_config(const std::string& name, const std::string& json) const {
        const auto p = dir / name;
        std::ofstream(p) << json;
        return p;
    }
    fs::path dir;
};

}  // namespace

TEST_F(Cli, OracleWritesGroundTruth) {
    const auto r = run("oracle" + out());
    ASSERT_EQ(r.code, 0) << r.output;
    const auto q = lines(slurp(dir / "q_star.csv"));
    ASSERT_EQ(q.size(), 21u);
    EXPECT_EQ(q[0], "mileage,maintain,replace");
    const auto row = csv_numbers(q[1]);
    EXPECT_NEAR(row[1], -52.534, 5e-4);
    EXPECT_NEAR(row[2], -54.815, 5e-4);
    EXPECT_TRUE(fs::exists(dir / "policy.csv"));
    EXPECT_TRUE(fs::exists(dir / "reward.csv"));
}

TEST_F(Cli, ZeroDiscountOracleEqualsReward) {
    const auto cfg = write_config("beta0.json", R"({"env": {"discount": 0.0}})");
    ASSERT_EQ(run("oracle --config " + cfg.string() + out()).code, 0);
    const auto q = lines(slurp(dir / "q_star.csv"));
    const auto r = lines(slurp(dir / "reward.csv"));
    ASSERT_EQ(q.size(), r.size());
    for (std::size_t i = 1; i < q.size(); ++i) {
        const auto a = csv_numbers(q[i]), b = csv_numbers(r[i]);
        for (std::size_t j = 0; j < a.size(); ++j) EXPECT_DOUBLE_EQ(a[j], b[j]);
    }
}

TEST_F(Cli, OracleToleranceAgreement) {
    ASSERT_EQ(run("oracle --tolerance 1e-12" + out("tight")).code, 0);
    ASSERT_EQ(run("oracle --tolerance 1e-8" + out("loose")).code, 0);
    const auto a = lines(slurp(dir / "tight" / "q_star.csv")), b = lines(slurp(dir / "loose" / "q_star.csv"));
    for (std::size_t i = 1; i < a.size(); ++i) {
        const auto x = csv_numbers(a[i]), y = csv_numbers(b[i]);
        for (std::size_t j = 1; j < x.size(); ++j) EXPECT_NEAR(x[j], y[j], 1e-7);
    }
}

TEST_F(Cli, GenerateShapesAndDeterminism) {
    ASSERT_EQ(run("generate --n-traj 50 --horizon 100" + out()).code, 0);
    const auto first = slurp(dir / "dataset.jsonl");
    EXPECT_EQ(lines(first).size(), 5001u);  // header line plus one record per transition
    ASSERT_EQ(run("generate --n-traj 50 --horizon 100" + out()).code, 0);
    EXPECT_EQ(slurp(dir / "dataset.jsonl"), first);

    ASSERT_EQ(run("generate --n-traj 2 --horizon 3 --n-dummy 100" + out("dummy")).code, 0);
    const auto records = lines(slurp(dir / "dummy" / "dataset.jsonl"));
    ASSERT_EQ(records.size(), 7u);
    const auto& rec = records[1];
    const auto s = rec.find("\"s\":[");
    ASSERT_NE(s, std::string::npos);
    const auto close = rec.find(']', s);
    EXPECT_EQ(std::count(rec.begin() + static_cast<long>(s), rec.begin() + static_cast<long>(close), ','), 100);
}

TEST_F(Cli, TrainAndEvaluateGladiusAndBc) {
    ASSERT_EQ(run("generate" + out()).code, 0);
    for (const auto* method : {"gladius", "bc"}) {
        const auto t = run(std::string("train --method ") + method + out());
        ASSERT_EQ(t.code, 0) << t.output;
        EXPECT_TRUE(fs::exists(dir / (std::string("checkpoint_") + method + ".json")));
        EXPECT_TRUE(fs::exists(dir / (std::string("losses_") + method + ".csv")));
        const auto e = run(std::string("evaluate --method ") + method + out());
        ASSERT_EQ(e.code, 0) << e.output;
        EXPECT_NE(e.output.find("mileage"), std::string::npos);  // per-state table on stdout
        const auto report = lines(slurp(dir / (std::string("report_") + method + ".csv")));
        ASSERT_EQ(report.size(), 2u);
        EXPECT_EQ(report[0], "method,n_traj,n_dummy,seed,mape_r,mape_q,wall_secs");
        const double mape_r = csv_numbers(report[1].substr(report[1].find(',') + 1))[3];
        if (std::string(method) == "gladius") {
            EXPECT_LE(mape_r, 3.0);
        } else {
            EXPECT_GE(mape_r, 40.0);
        }
        EXPECT_TRUE(fs::exists(dir / (std::string("per_state_") + method + ".txt")));
    }
}

TEST_F(Cli, SweepReportsMeanAndSe) {
    const auto r = run("sweep --n-seeds 2 --n-traj 10 --epochs 20" + out());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(lines(slurp(dir / "sweep_gladius.csv")).size(), 3u);
    EXPECT_NE(r.output.find("mape_r mean"), std::string::npos);
    EXPECT_NE(r.output.find("(n=2)"), std::string::npos);
}

TEST_F(Cli, MissingArtifactsAreNamed) {
    auto r = run("train" + out());
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.output.find("dataset.jsonl"), std::string::npos);
    ASSERT_EQ(run("generate --n-traj 5" + out()).code, 0);
    r = run("evaluate --n-traj 5" + out());
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.output.find("checkpoint_gladius.json"), std::string::npos);
}

TEST_F(Cli, RefusesMismatchedEnvironment) {
    ASSERT_EQ(run("generate --n-traj 5" + out()).code, 0);
    ASSERT_EQ(run("train --n-traj 5 --epochs 5" + out()).code, 0);
    auto r = run("train --n-dummy 3 --epochs 5" + out());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("environment"), std::string::npos);
    r = run("evaluate --n-dummy 3" + out());
    EXPECT_EQ(r.code, 2);

    // A checkpoint trained on another environment is refused against this data.
    ASSERT_EQ(run("generate --n-traj 5 --n-dummy 3" + out("other")).code, 0);
    r = run("evaluate --checkpoint " + (dir / "checkpoint_gladius.json").string() + " --n-dummy 3" + out("other"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("checkpoint"), std::string::npos);
}

TEST_F(Cli, ConfigErrors) {
    EXPECT_EQ(run("oracle --method nonsense" + out()).code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    const auto cfg = write_config("typo.json", R"({"env": {"dicount": 0.5}})");
    const auto r = run("oracle --config " + cfg.string() + out());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("dicount"), std::string::npos);
    EXPECT_EQ(run("oracle --config " + (dir / "absent.json").string() + out()).code, 4);
}

TEST_F(Cli, EnvironmentOverridesOutputDir) {
    const auto cmd = "GLADIUS_OUT=" + (dir / "env").string() + " " + std::string(GLADIUS_CLI_PATH) + " oracle >/dev/null";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "env" / "q_star.csv"));
    // Explicit flags win over the environment.
    const auto flagged = "GLADIUS_OUT=" + (dir / "env2").string() + " " + std::string(GLADIUS_CLI_PATH) +
                         " oracle --output-dir " + (dir / "flag").string() + " >/dev/null";
    ASSERT_EQ(std::system(flagged.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "flag" / "q_star.csv"));
    EXPECT_FALSE(fs::exists(dir / "env2"));
}
