#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
    int rc = -1;
    std::string out;
};

std::string cli() {
    const char* p = std::getenv("MOT_CLI");
    return p ? p : "";
}

Run run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

json run_json(const std::string& args, int expect_rc = 0) {
    const auto r = run(args + " --json");
    EXPECT_EQ(r.rc, expect_rc) << args;
    return json::parse(r.out);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    if (header) *header = line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        if (cli().empty()) GTEST_SKIP() << "MOT_CLI not set";
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::path(::testing::TempDir()) / (std::string("mot_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }
    std::string out(const std::string& sub = "") const { return " --out " + (dir_ / sub).string(); }
    fs::path file(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

// unit-mean gamma density table with shape k, optionally reflected under x -> 1/x
void write_gamma(const fs::path& p, double k, bool reflect) {
    std::ofstream os(p);
    os.precision(17);
    for (int i = 0; i <= 3000; ++i) {
        const double x = 0.02 * std::pow(300.0, i / 3000.0);
        const double t = reflect ? 1.0 / x : x;
        const double f = std::exp((k - 1) * std::log(t) - k * t + k * std::log(k) - std::lgamma(k));
        os << x << ' ' << (reflect ? f / (x * x * x) : f) << '\n';
    }
}

}  // namespace

TEST_F(Cli, ProfileWritesExtremizers) {
    EXPECT_EQ(run("profile" + out()).rc, 0);
    const auto j = json::parse(slurp(file("extremizers.json")));
    EXPECT_NEAR(j["m"].get<double>(), 0.783887, 1e-6);
    EXPECT_NEAR(j["m_tilde"].get<double>(), 1.275693, 1e-6);
    EXPECT_NEAR(j["closed_form"]["m"].get<double>(), j["m"].get<double>(), 1e-6);
    std::string header;
    const auto rows = read_csv(file("deltaF.csv"), &header);
    EXPECT_EQ(header, "x,deltaF,deltaG");
    EXPECT_GT(rows.size(), 100u);
}

TEST_F(Cli, ProfileSymmetricPairReciprocal) {
    EXPECT_EQ(run("profile --mu lognormal:sigma=0.4 --nu lognormal:sigma=0.9" + out()).rc, 0);
    const auto j = json::parse(slurp(file("extremizers.json")));
    EXPECT_NEAR(j["m"].get<double>() * j["m_tilde"].get<double>(), 1.0, 1e-6);
}

TEST_F(Cli, EqualLawsExitTwo) {
    EXPECT_EQ(run("profile --nu lognormal:sigma=0.2" + out()).rc, 2);
    EXPECT_EQ(run("build --nu lognormal:sigma=0.2" + out()).rc, 2);
}

TEST_F(Cli, BadConfigExitFour) {
    EXPECT_EQ(run("build --plan diagonal" + out()).rc, 4);
    EXPECT_EQ(run("price --payoff butterfly" + out()).rc, 4);
    EXPECT_EQ(run("profile --mu lognormal:s=0.2" + out()).rc, 4);
    EXPECT_EQ(run("frobnicate").rc, 4);
    std::ofstream(file("bad.cfg")) << "[run]\ncolour = blue\n";
    EXPECT_EQ(run("profile --config " + file("bad.cfg").string() + out()).rc, 4);
}

TEST_F(Cli, BuildHkColumnsDecrease) {
    ASSERT_EQ(run("build --plan hk --grid 128" + out()).rc, 0);
    std::string header;
    const auto rows = read_csv(file("hk.csv"), &header);
    EXPECT_EQ(header, "x,p,q,l,u");
    ASSERT_EQ(rows.size(), 128u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i][1], rows[i - 1][1]);
        EXPECT_LT(rows[i][2], rows[i - 1][2]);
    }
}

TEST_F(Cli, BuildLeftIdentityBelowMaximizer) {
    ASSERT_EQ(run("build --plan left --grid 128" + out()).rc, 0);
    std::string header;
    const auto rows = read_csv(file("left.csv"), &header);
    EXPECT_EQ(header, "x,Ld,Lu,qL");
    int identity = 0;
    for (const auto& r : rows) {
        if (r[0] <= 0.783887) {
            EXPECT_EQ(r[1], r[0]);
            EXPECT_EQ(r[2], r[0]);
            ++identity;
        } else {
            EXPECT_LT(r[1], r[0]);
            EXPECT_GT(r[2], r[0]);
        }
    }
    EXPECT_GT(identity, 0);
}

TEST_F(Cli, BuildRightIdentityAboveMinimizer) {
    ASSERT_EQ(run("build --plan right --grid 128" + out()).rc, 0);
    std::string header;
    const auto rows = read_csv(file("right.csv"), &header);
    EXPECT_EQ(header, "x,Rd,Ru,qR");
    int identity = 0;
    for (const auto& r : rows) {
        if (r[0] >= 1.275693) {
            EXPECT_EQ(r[1], r[0]);
            EXPECT_EQ(r[2], r[0]);
            ++identity;
        }
    }
    EXPECT_GT(identity, 0);
}

TEST_F(Cli, OutputsAreByteIdentical) {
    for (const std::string plan : {"hk", "left", "right"}) {
        ASSERT_EQ(run("build --grid 96 --plan " + plan + out("a")).rc, 0);
        ASSERT_EQ(run("build --grid 96 --plan " + plan + out("b")).rc, 0);
        const auto a = slurp(file("a/" + plan + ".csv")), b = slurp(file("b/" + plan + ".csv"));
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, b);
        EXPECT_EQ(a.find('\r'), std::string::npos);
    }
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
    std::ofstream(file("run.cfg")) << "# pair\n[mu]\nsigma = 0.2\n[nu]\nspec = lognormal:sigma=0.3\n"
                                      "[payoff]\nspec = forward\n[run]\nplan = left\ngrid = 64\n";
    const auto j = run_json("price --config " + file("run.cfg").string() + out());
    EXPECT_EQ(j["plan"], "left");
    EXPECT_NEAR(j["value"].get<double>(), 0.0, 1e-9);
    const auto k = run_json("price --config " + file("run.cfg").string() + " --plan hk --payoff straddle2:alpha=1" + out());
    EXPECT_EQ(k["plan"], "hk");
    EXPECT_NEAR(k["value"].get<double>(), 0.0868138062574744, 1e-7);
}

TEST_F(Cli, PriceForwardIsZeroUnderEveryPlan) {
    for (const std::string plan : {"hk", "left", "right"}) {
        const auto j = run_json("price --payoff forward --grid 128 --plan " + plan + out());
        EXPECT_NEAR(j["value"].get<double>(), 0.0, 1e-9) << plan;
    }
}

TEST_F(Cli, HkPriceMatchesLpMinimum) {
    const auto p = run_json("price --plan hk --payoff straddle2:alpha=1" + out());
    const auto b = run_json("bounds --atoms 150 --payoff straddle2:alpha=1" + out());
    // the quantized minimum approaches the plan value from above, like 1/atoms
    const double lp = b["min"]["value"].get<double>();
    EXPECT_LE(std::abs(p["value"].get<double>() - lp) / lp, 0.01);
    EXPECT_TRUE(b["certified"].get<bool>());
}

TEST_F(Cli, TypeOneEqualsTypeTwoOnSymmetrizedPair) {
    write_gamma(file("g30.txt"), 30.0, false);
    write_gamma(file("g12.txt"), 12.0, false);
    write_gamma(file("s30.txt"), 30.0, true);
    write_gamma(file("s12.txt"), 12.0, true);
    const std::string pair = " --mu table:" + file("g30.txt").string() + " --nu table:" + file("g12.txt").string();
    const std::string spair = " --mu table:" + file("s30.txt").string() + " --nu table:" + file("s12.txt").string();
    const auto a = run_json("price --plan hk --grid 256 --payoff straddle1:alpha=1" + pair + out());
    const auto b = run_json("price --plan hk --grid 256 --payoff straddle2:alpha=1" + spair + out());
    const double va = a["value"].get<double>(), vb = b["value"].get<double>();
    // the reflected table is resampled piecewise-linearly, hence the loose tolerance
    EXPECT_NEAR(va, vb, 1e-4 * va);
}

TEST_F(Cli, BoundsOnExactFixtures) {
    auto j = run_json("bounds --mu atoms:1=1 --nu atoms:0.5=0.5,1.5=0.5 --payoff straddle2:alpha=1 --atoms 4" + out());
    EXPECT_NEAR(j["min"]["value"].get<double>(), 0.5, 1e-9);
    j = run_json("bounds --mu atoms:0.5=0.5,1.5=0.5 --nu atoms:0.25=0.5,1.75=0.5 --payoff straddle2:alpha=1 --atoms 4" +
                 out());
    EXPECT_NEAR(j["min"]["value"].get<double>(), 5.0 / 12.0, 1e-9);
    std::ofstream(file("fx.txt")) << "x 2\n0.9 0.5\n1.1 0.5\ny 3\n0.5 0.25\n1 0.5\n1.5 0.25\ncost straddle1:alpha=1\n";
    j = run_json("bounds --hedge --instance " + file("fx.txt").string() + out());
    EXPECT_NEAR(j["min"]["value"].get<double>(), 134.0 / 495.0, 1e-9);
    EXPECT_NEAR(j["max"]["value"].get<double>(), 146.0 / 495.0, 1e-9);
    EXPECT_LE(j["max"]["duality_gap"].get<double>(), 1e-8);
    EXPECT_LE(j["min"]["hedge_violation"].get<double>(), 1e-8);
    EXPECT_EQ(read_csv(file("hedge_min_x.csv")).size(), 2u);
    EXPECT_EQ(read_csv(file("hedge_max_y.csv")).size(), 3u);
}

TEST_F(Cli, BoundsInfeasibleExitTwo) {
    EXPECT_EQ(run("bounds --mu lognormal:sigma=0.3 --nu lognormal:sigma=0.2 --atoms 10" + out()).rc, 2);
}

TEST_F(Cli, VerifySuitesPass) {
    for (const std::string suite : {"symmetry", "coupling", "oracle"}) {
        const auto j = run_json("verify " + suite + " --grid 128" + out());
        EXPECT_TRUE(j["passed"].get<bool>()) << suite;
        EXPECT_FALSE(j["checks"].empty());
    }
}

TEST_F(Cli, VerifyCorruptedFixtureFailsByName) {
    const auto j = run_json("verify oracle --corrupt" + out(), 3);
    EXPECT_FALSE(j["passed"].get<bool>());
    std::vector<std::string> failed;
    for (const auto& c : j["checks"]) {
        if (!c["pass"].get<bool>()) failed.push_back(c["name"]);
    }
    EXPECT_EQ(failed, (std::vector<std::string>{"oracle.2x2.min.value", "oracle.2x2.max.value"}));
    const auto k = run_json("verify coupling --corrupt --grid 128" + out(), 3);
    bool named = false;
    for (const auto& c : k["checks"]) named = named || (c["name"] == "coupling.hk.martingale" && !c["pass"].get<bool>());
    EXPECT_TRUE(named);
}
