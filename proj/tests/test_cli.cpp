#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "kfwer_cli.hpp"

using namespace kfwer;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "kfwer");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::path(::testing::TempDir()) /
               ("kfwer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        // 80 samples, 12 continuous predictors, 3 of them active.
        std::mt19937_64 rng(5);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::ofstream f(dir_ / "data.csv");
        f << "id";
        for (int j = 1; j <= 12; ++j) f << ",V" << j;
        f << ",resp\n";
        for (int i = 0; i < 80; ++i) {
            double y = normal(rng);
            f << "s" << i;
            for (int j = 1; j <= 12; ++j) {
                const double x = normal(rng);
                if (j <= 3) y += 1.5 * x;
                f << "," << csv::format_real(x);
            }
            f << "," << (i == 7 ? std::string() : csv::format_real(y)) << "\n";
        }
        std::ofstream panel(dir_ / "panel.txt");
        panel << "V1\nV2\nV3\n";
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::vector<std::string> select_args(const std::string& out, const std::string& seed = "11") const {
        return {"select", "--input", path("data.csv"), "--response", "resp", "--exclude", "id", "--k", "2",
                "--alpha", "0.5", "--seed", seed, "--out", path(out), "--min-mutations", "1"};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ConstructWritesKnockoffsAndManifest) {
    {
        std::ofstream f(dir_ / "x.csv");
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal(0.0, 1.0);
        f << "a,b,c\n";
        for (int i = 0; i < 10; ++i) f << normal(rng) << "," << normal(rng) << "," << normal(rng) << "\n";
    }
    const auto r = run({"construct", "--input", path("x.csv"), "--output", path("ko.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto table = csv::read_table(path("ko.csv"));
    EXPECT_EQ(table.header, (std::vector<std::string>{"ko_a", "ko_b", "ko_c"}));
    EXPECT_EQ(table.rows.size(), 10u);
    const auto manifest = nlohmann::json::parse(slurp(dir_ / "ko.manifest.json"));
    EXPECT_EQ(manifest["command"], "construct");
    EXPECT_EQ(manifest["s"].size(), 3u);
}

TEST_F(CliTest, ConstructNeedsTwiceAsManyRows) {
    {
        std::ofstream f(dir_ / "x.csv");
        f << "a,b,c\n1,2,3\n4,5,7\n2,2,9\n1,0,0\n";
    }
    const auto r = run({"construct", "--input", path("x.csv"), "--output", path("ko.csv")});
    EXPECT_EQ(r.code, 2) << r.err;
    const auto ok = run({"construct", "--input", path("x.csv"), "--output", path("ko.csv"), "--allow-row-augment"});
    EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST_F(CliTest, SelectIsDeterministic) {
    const auto a = run(select_args("a.csv"));
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = run(select_args("b.csv"));
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(slurp(dir_ / "a.csv"), slurp(dir_ / "b.csv"));
    EXPECT_EQ(slurp(dir_ / "a.result.json"), slurp(dir_ / "b.result.json"));

    const auto result = nlohmann::json::parse(slurp(dir_ / "a.result.json"));
    EXPECT_EQ(result["n"], 79);
    EXPECT_EQ(result["p"], 12);
    EXPECT_EQ(result["calibration"]["k"], 2);
    const auto manifest = nlohmann::json::parse(slurp(dir_ / "a.manifest.json"));
    EXPECT_EQ(manifest["config"]["seed"], 11);
    EXPECT_EQ(manifest["config"]["k"], 2);

    const auto report = csv::read_table(path("a.csv"));
    EXPECT_EQ(report.rows.size(), 12u);
    EXPECT_EQ(report.header.front(), "label");
}

TEST_F(CliTest, SelectWithPanelFdrAndBaselines) {
    auto args = select_args("full.csv");
    for (const char* extra : {"--panel", "", "--fdr-q", "0.2", "--baselines", "--stepdown-draws", "300"}) {
        args.emplace_back(extra);
    }
    args[args.size() - 6] = path("panel.txt");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("flat"), std::string::npos);
    const auto result = nlohmann::json::parse(slurp(dir_ / "full.result.json"));
    EXPECT_TRUE(result.contains("fdr_knockoffs"));
    EXPECT_TRUE(result.contains("holm"));
    EXPECT_TRUE(result.contains("stepdown"));
    EXPECT_TRUE(result.contains("panel_score"));
    EXPECT_NE(r.out.find("FDR ko"), std::string::npos);
}

TEST_F(CliTest, MalformedCsvExitsTwo) {
    {
        std::ofstream f(dir_ / "bad.csv");
        f << "V1,resp\n1,2\n3,x\n";
    }
    const auto r = run({"select", "--input", path("bad.csv"), "--response", "resp", "--k", "1", "--alpha", "0.1",
                        "--seed", "1", "--out", path("r.csv")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("column 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingFileExitsTwo) {
    const auto r = run({"select", "--input", path("nope.csv"), "--response", "resp", "--k", "1", "--alpha", "0.1",
                        "--seed", "1", "--out", path("r.csv")});
    EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, AnalyzePfer) {
    auto args = select_args("pfer.csv");
    args[0] = "analyze";
    // Replace --k 2 --alpha 0.5 with --pfer 4.
    args.erase(args.begin() + 7, args.begin() + 11);
    args.insert(args.end(), {"--pfer", "4"});
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto result = nlohmann::json::parse(slurp(dir_ / "pfer.result.json"));
    EXPECT_EQ(result["v"], 4);
    EXPECT_EQ(result["selection"]["v_used"], 4);
}

TEST_F(CliTest, AnalyzeFdxNeedsK) {
    auto args = select_args("fdx.csv");
    args[0] = "analyze";
    args.erase(args.begin() + 7, args.begin() + 9);  // drop --k 2
    args.insert(args.end(), {"--fdx-gamma", "0.2"});
    EXPECT_EQ(run(args).code, 4);
    args.insert(args.end(), {"--k", "2"});
    const auto ok = run(args);
    EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST_F(CliTest, AnalyzeTargetsAreExclusive) {
    auto args = select_args("x.csv");
    args[0] = "analyze";
    args.insert(args.end(), {"--pfer", "2", "--rw-gamma", "0.1"});
    EXPECT_EQ(run(args).code, 4);
    args.erase(args.end() - 4, args.end());
    EXPECT_EQ(run(args).code, 4);
}

TEST_F(CliTest, AnalyzeRomanoWolf) {
    auto args = select_args("rw.csv");
    args[0] = "analyze";
    args.erase(args.begin() + 7, args.begin() + 9);
    args.insert(args.end(), {"--rw-gamma", "0.2"});
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto result = nlohmann::json::parse(slurp(dir_ / "rw.result.json"));
    EXPECT_GE(result["k_hat"].get<int>(), 1);
}

TEST_F(CliTest, SimulateWritesTwoCsvs) {
    const auto r = run({"simulate", "--preset", "desk", "--sweep", "rho", "--grid", "0,0.5", "--replicates", "2",
                        "--seed", "3", "--out", path("sim"), "--procedures", "holm,stepup", "--threads", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "sim" / "tidy.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "sim" / "aggregate.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "sim" / "manifest.json"));
    const auto tidy = csv::read_table((dir_ / "sim" / "tidy.csv").string());
    EXPECT_EQ(tidy.rows.size(), 2u * 2u * 2u);
    const auto agg = csv::read_table((dir_ / "sim" / "aggregate.csv").string());
    EXPECT_EQ(agg.rows.size(), 4u);
}

TEST_F(CliTest, ConfigErrorsExitFour) {
    EXPECT_EQ(run({"frobnicate"}).code, 4);
    EXPECT_EQ(run({"simulate", "--preset", "huge", "--sweep", "rho", "--grid", "0", "--seed", "1", "--out",
                   path("s")})
                  .code,
              4);
    auto args = select_args("k0.csv");
    args[8] = "0";
    EXPECT_EQ(run(args).code, 4);
}
