#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fedsa/cli/manifest.hpp"
#include "fedsa/cli/oracle_check.hpp"
#include "fedsa/cli/runner.hpp"
#include "fedsa/cli/summarize.hpp"
#include "fedsa/errors.hpp"

using namespace fedsa;
using namespace fedsa::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("fedsa_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kSynthetic = R"(
dataset = synthetic
dataset.train = 400
dataset.test = 200
dataset.features = 4
dataset.separation = 6
clients = 8
malicious = 2
lr = 0.05
batch_size = 10
local_epochs = 1
rounds = 3
)";

std::string experiment(const std::string& id, const std::string& agr, const std::string& attack,
                       const std::string& extra = "") {
    return "[experiment." + id + "]\nagr = " + agr + "\nattack = " + attack + "\n" + extra + "\n";
}

RunOptions logged(std::ostream& log) {
    RunOptions o;
    o.log = &log;
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string strip_wallclock(const std::string& csv) {
    std::stringstream in(csv), out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
}

void write_summary(const fs::path& dir, const std::string& id, const std::string& agr, const std::string& attack,
                   double final_acc, double target) {
    nlohmann::json j;
    j["id"] = id;
    j["agr"] = agr;
    j["attack"] = attack;
    j["final_accuracy"] = final_acc;
    j["target_accuracy"] = target;
    j["final_delta"] = (final_acc - target) / target * 100.0;
    std::ofstream(dir / (id + ".summary.json")) << j.dump();
}

}  // namespace

TEST(ParseConfig, MinimalDocumentGivesOneConfig) {
    const auto m = parse_config_text("[experiment.a]\ndataset = synthetic\nrounds = 4\nagr = median\nattack = none\n");
    ASSERT_EQ(m.experiments.size(), 1u);
    const auto& c = m.experiments.front();
    EXPECT_EQ(c.id, "a");
    EXPECT_EQ(c.rounds, 4);
    EXPECT_EQ(c.agr.kind, agr::AggregatorKind::Median);
    EXPECT_EQ(c.attack.kind, sim::AttackKind::None);
    EXPECT_EQ(c.clients, 50u);
}

TEST(ParseConfig, DefaultsApplyAndExperimentsOverride) {
    const auto m = parse_config_text(std::string("[defaults]") + kSynthetic + experiment("x", "fedavg", "none") +
                                     experiment("y", "trmean", "lie", "clients = 12\nattack.lie_z = 0.5"));
    ASSERT_EQ(m.experiments.size(), 2u);
    EXPECT_EQ(m.experiments[0].clients, 8u);
    EXPECT_EQ(m.experiments[1].clients, 12u);
    EXPECT_EQ(m.experiments[1].attack.lie_z, 0.5);
}

TEST(ParseConfig, DuplicateIdIsNamed) {
    try {
        parse_config_text(experiment("dup", "fedavg", "none", "dataset = synthetic\nrounds = 1") +
                          experiment("dup", "fedavg", "none", "dataset = synthetic\nrounds = 1"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
    }
}

TEST(ParseConfig, QuotedNumbersAreAccepted) {
    const auto m = parse_config_text(experiment("q", "fedavg", "none",
                                                "dataset = synthetic\nrounds = 2\npartition = dirichlet\n"
                                                "partition.alpha = \"0.5\""));
    EXPECT_EQ(m.experiments.front().partition.alpha, 0.5);
}

TEST(ParseConfig, ErrorsNameTheKey) {
    auto message = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(experiment("a", "fedavg", "none", "dataset = synthetic\nrounds = 1\nclients = many"))
                  .find("clients"),
              std::string::npos);
    EXPECT_NE(message(experiment("a", "fedavg", "none", "dataset = synthetic\nrounds = 1\nbogus = 3")).find("bogus"),
              std::string::npos);
    EXPECT_NE(message("[experiment.a]\ndataset = synthetic\nagr = fedavg\nattack = none\n").find("rounds"),
              std::string::npos);
    EXPECT_NE(message(experiment("a", "fedavg", "nope", "dataset = synthetic\nrounds = 1")).find("nope"),
              std::string::npos);
    EXPECT_THROW(parse_config("/nonexistent/manifest.ini"), ConfigError);
}

TEST(ParseConfig, KeysRoundTrip) {
    const auto m = parse_config_text(std::string("[defaults]") + kSynthetic +
                                     experiment("f", "mkrum", "fedsa",
                                                "attack.k = 0.3\nattack.theta = omniscient\nagr.mkrum_select = 5\n"
                                                "attack.discretization = exact-hold\nmodel.hidden = 8,4"));
    const auto keys = config_to_keys(m.experiments.front());
    std::string text = "[experiment.f]\n";
    for (const auto& [k, v] : keys) text += k + " = " + v + "\n";
    const auto again = parse_config_text(text);
    EXPECT_EQ(config_to_keys(again.experiments.front()), keys);
}

TEST(RunManifest, EmptyManifestWritesNothing) {
    const auto dir = fresh_dir("empty") / "out";
    ExperimentManifest m;
    m.output_dir = dir;
    EXPECT_EQ(run_manifest(m), 0);
    EXPECT_FALSE(fs::exists(dir));
}

TEST(RunManifest, OneFailureDoesNotStopTheOthers) {
    const auto dir = fresh_dir("isolation");
    auto m = parse_config_text(std::string("[defaults]") + kSynthetic + experiment("ok1", "fedavg", "none") +
                               experiment("bad", "fedavg", "none", "dataset = mnist\ndataset.dir = /nonexistent") +
                               experiment("ok2", "median", "lie"));
    m.output_dir = dir;
    std::ostringstream log;
    EXPECT_NE(run_manifest(m, logged(log)), 0);
    EXPECT_TRUE(fs::exists(dir / "ok1.rounds.csv"));
    EXPECT_TRUE(fs::exists(dir / "ok2.summary.json"));
    EXPECT_FALSE(fs::exists(dir / "bad.rounds.csv"));
    EXPECT_NE(log.str().find("[bad] failed"), std::string::npos);
}

TEST(RunManifest, SameSeedGivesIdenticalCsvs) {
    const auto text = std::string("[defaults]") + kSynthetic + experiment("d", "mkrum", "fedsa", "attack.shadow_rounds = 3");
    std::string first;
    for (int i = 0; i < 2; ++i) {
        const auto dir = fresh_dir("det" + std::to_string(i));
        auto m = parse_config_text(text);
        m.output_dir = dir;
        std::ostringstream log;
        ASSERT_EQ(run_manifest(m, logged(log)), 0) << log.str();
        const auto csv = strip_wallclock(slurp(dir / "d.rounds.csv"));
        if (i == 0) {
            first = csv;
        } else {
            EXPECT_EQ(csv, first);
        }
    }
}

TEST(RunManifest, ThetaFilledAgainstBaselines) {
    const auto dir = fresh_dir("theta");
    auto m = parse_config_text(std::string("[defaults]") + kSynthetic + "target_accuracy = 80\n" +
                               experiment("fa-lie", "fedavg", "lie") +
                               experiment("fa-fedsa", "fedavg", "fedsa", "attack.shadow_rounds = 3"));
    m.output_dir = dir;
    std::ostringstream log;
    ASSERT_EQ(run_manifest(m, logged(log)), 0) << log.str();
    const auto j = nlohmann::json::parse(slurp(dir / "fa-fedsa.summary.json"));
    ASSERT_TRUE(j["theta_vs"].contains("lie"));
    const auto lie = nlohmann::json::parse(slurp(dir / "fa-lie.summary.json"));
    const double fed_delta = j["final_delta"], lie_delta = lie["final_delta"];
    if (fed_delta != 0.0) {
        EXPECT_DOUBLE_EQ(j["theta_vs"]["lie"].get<double>(), std::abs(lie_delta) / std::abs(fed_delta));
    }
}

TEST(RoundsCsv, RoundTripsExactly) {
    std::vector<sim::RoundRecord> recs(3);
    for (int i = 0; i < 3; ++i) {
        recs[i].round = i;
        recs[i].global_accuracy = 0.1 * i + 1.0 / 3.0;
        recs[i].delta = -1e-300 * i;
        recs[i].err_norm = 12345.678901234567;
        recs[i].surface_norm = std::numeric_limits<double>::denorm_min();
        recs[i].selected_malicious = i - 1;
        recs[i].selected_total = 7;
        recs[i].wallclock_ms = 0.5;
    }
    const auto path = fresh_dir("csv") / "r.csv";
    write_rounds_csv(path, recs);
    const auto back = read_rounds_csv(path);
    ASSERT_EQ(back.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].global_accuracy, recs[i].global_accuracy);
        EXPECT_EQ(back[i].delta, recs[i].delta);
        EXPECT_EQ(back[i].err_norm, recs[i].err_norm);
        EXPECT_EQ(back[i].surface_norm, recs[i].surface_norm);
        EXPECT_EQ(back[i].selected_malicious, recs[i].selected_malicious);
    }
}

TEST(Summarize, SingleResultIsOneByOne) {
    const auto dir = fresh_dir("sum1");
    write_summary(dir, "only", "median", "lie", 88.0, 90.0);
    const auto t = summarize(dir);
    EXPECT_EQ(t.rows, std::vector<std::string>{"median"});
    EXPECT_EQ(t.columns, std::vector<std::string>{"lie"});
    EXPECT_EQ(t.cells.size(), 1u);
    EXPECT_FALSE(t.text().empty());
    EXPECT_TRUE(nlohmann::json::accept(t.json()));
}

TEST(Summarize, ThetaRecomputedFromDeltas) {
    const auto dir = fresh_dir("sum2");
    write_summary(dir, "a", "fedavg", "fedsa", 90.45, 90.0);
    write_summary(dir, "b", "fedavg", "lie", 80.0, 90.0);
    write_summary(dir, "c", "mkrum", "lie", 85.0, 90.0);
    std::ofstream(dir / "broken.summary.json") << "{ not json";
    const auto t = summarize(dir);
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.columns.size(), 2u);
    ASSERT_EQ(t.theta.count({"fedavg", "lie"}), 1u);
    EXPECT_NEAR(t.theta.at({"fedavg", "lie"}), (10.0 / 90.0 * 100.0) / 0.5, 1e-9);
    EXPECT_EQ(t.theta.count({"mkrum", "lie"}), 0u);
    EXPECT_EQ(t.warnings.size(), 1u);
}

TEST(Summarize, NothingUsableThrows) {
    const auto dir = fresh_dir("sum3");
    std::ofstream(dir / "x.summary.json") << "[]";
    EXPECT_THROW(summarize(dir), ConfigError);
}

TEST(OracleCheck, AllSuitesPass) {
    std::ostringstream out;
    EXPECT_EQ(oracle_check(out), 0) << out.str();
    EXPECT_EQ(out.str().find("FAIL"), std::string::npos);
}

TEST(OracleCheck, ExactHoldMeetsToleranceWhereEulerDoesNot) {
    using attack::Discretization;
    EXPECT_LE(ode_tracking_rms(2.0, 0.2, 1.0, 0.01, 10.0, 1e-4, Discretization::ExactHold), 1e-3);
    EXPECT_GT(ode_tracking_rms(2.0, 0.2, 1.0, 0.01, 10.0, 1e-4, Discretization::Euler), 1e-3);
}
