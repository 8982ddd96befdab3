// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   fedsa_acceptance --data-root DIR --work-dir DIR [--only 1,2,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "fedsa/cli/oracle_check.hpp"
#include "fedsa/cli/runner.hpp"
#include "fedsa/num/mlp.hpp"
#include "fedsa/sim/metrics.hpp"
#include "fedsa/sim/simulator.hpp"

namespace fs = std::filesystem;
using namespace fedsa;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << x;
    return s.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path data_root;
    fs::path work_dir;
    std::map<std::string, sim::ExperimentResult> runs;
    std::map<std::string, double> run_seconds;
};

// Synthetic logistic task with static benign clients and an omniscient attacker.
sim::SimConfig linear_plant_config(double k) {
    sim::SimConfig cfg;
    cfg.id = "linear-plant-k" + fmt(k);
    cfg.dataset.kind = sim::DatasetKind::Synthetic;
    cfg.dataset.n_classes = 2;
    cfg.dataset.n_features = 10;
    cfg.dataset.n_train = 2000;
    cfg.dataset.n_test = 2000;
    cfg.dataset.separation = 2.0;
    cfg.clients = 20;
    cfg.malicious = 2;
    cfg.rounds = 100;
    cfg.lr = 0.01;
    cfg.batch_size = 10;
    cfg.local_epochs = 1;
    cfg.benign_mode = sim::BenignMode::Static;
    cfg.agr.kind = agr::AggregatorKind::FedAvg;
    cfg.attack.kind = sim::AttackKind::FedSa;
    cfg.attack.sliding.k = k;
    cfg.attack.sliding.control_gain = 1e-4;
    cfg.attack.sliding.theta_mode = attack::ThetaMode::Omniscient;
    cfg.attack.shadow_rounds = 30;
    cfg.target_accuracy = 75.0;
    cfg.seed = 1;
    return cfg;
}

sim::SimConfig mnist_config(const Context& ctx, const std::string& id, agr::AggregatorKind agr_kind,
                            sim::AttackKind attack_kind) {
    sim::SimConfig cfg;
    cfg.id = id;
    cfg.dataset.kind = sim::DatasetKind::Mnist;
    cfg.dataset.mnist_dir = (ctx.data_root / "mnist").string();
    cfg.dataset.train_limit = 10000;
    cfg.dataset.hidden = {32};
    cfg.clients = 50;
    cfg.malicious = 5;
    cfg.rounds = 100;
    cfg.lr = 0.01;
    cfg.batch_size = 5;
    cfg.local_epochs = 3;
    cfg.target_accuracy = 90.0;
    cfg.seed = 1;
    cfg.agr.kind = agr_kind;
    cfg.attack.kind = attack_kind;
    cfg.attack.sliding.control_gain = 1e-3;
    cfg.attack.shadow_rounds = 100;
    cfg.attack.reference_cache = (ctx.work_dir / "cache" / "mnist-seed1").string();
    return cfg;
}

const sim::ExperimentResult& run_once(Context& ctx, const sim::SimConfig& cfg) {
    if (auto it = ctx.runs.find(cfg.id); it != ctx.runs.end()) return it->second;
    std::cerr << "[acceptance] running " << cfg.id << " (" << cfg.rounds << " rounds)\n" << std::flush;
    const auto t0 = Clock::now();
    auto res = sim::run_experiment(cfg);
    ctx.run_seconds[cfg.id] = seconds_since(t0);
    const auto dir = ctx.work_dir / "runs";
    fs::create_directories(dir);
    cli::write_rounds_csv(dir / (cfg.id + ".rounds.csv"), res.records);
    cli::write_summary_json(dir / (cfg.id + ".summary.json"), res);
    std::cerr << "[acceptance] " << cfg.id << ": final " << res.final_accuracy << "% in " << ctx.run_seconds[cfg.id]
              << " s\n";
    return ctx.runs.emplace(cfg.id, std::move(res)).first->second;
}

const sim::ExperimentResult& mnist_run(Context& ctx, const std::string& id, agr::AggregatorKind a, sim::AttackKind k) {
    return run_once(ctx, mnist_config(ctx, id, a, k));
}

// Round index at which the band is entered for good, or -1.
int settle_round(const std::vector<sim::RoundRecord>& recs, double band) {
    int settled = -1;
    for (std::size_t t = 0; t < recs.size(); ++t) {
        if (recs[t].surface_inf <= band) {
            if (settled < 0) settled = static_cast<int>(t);
        } else {
            settled = -1;
        }
    }
    return settled;
}

Outcome criterion1(Context&) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (double k : {0.5, 1.0, 2.0}) {
        for (double C : {0.0, 0.2}) {
            for (double e0 : {1.0, -1.0}) {
                worst = std::max(worst, cli::ode_tracking_rms(k, C, e0, 0.01, 10.0, 1e-4,
                                                              attack::Discretization::ExactHold));
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs < 1.0, "worst RMS " + fmt(worst) + " (<= 1e-3), " + fmt(secs, 3) + " s"};
}

Outcome criterion2(Context& ctx) {
    const auto t0 = Clock::now();
    const auto cfg = linear_plant_config(0.5);
    const auto& res = run_once(ctx, cfg);
    const double band = 2.0 * cfg.attack.sliding.control_gain * cfg.attack.sliding.dt;
    const int settled = settle_round(res.records, band);
    int increases = 0;
    for (std::size_t t = 1; t < res.records.size(); ++t) {
        const auto &prev = res.records[t - 1], &cur = res.records[t];
        if (prev.surface_inf <= band) continue;
        if (0.5 * cur.surface_norm * cur.surface_norm > 0.5 * prev.surface_norm * prev.surface_norm * (1 + 1e-12)) {
            ++increases;
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = settled >= 0 && settled <= 50 && increases == 0 && secs < 30.0;
    return {ok, "band " + fmt(band) + " entered for good at round " + std::to_string(settled) + " (<= 50), " +
                    std::to_string(increases) + " V increases outside band, " + fmt(secs, 3) + " s"};
}

Outcome criterion3(Context& ctx) {
    bool ok = true;
    std::string detail;
    for (auto [id, kind] : {std::pair{"fedavg-fedsa", agr::AggregatorKind::FedAvg},
                            std::pair{"trmean-fedsa", agr::AggregatorKind::TrimmedMean},
                            std::pair{"median-fedsa", agr::AggregatorKind::Median}}) {
        const auto& r = mnist_run(ctx, id, kind, sim::AttackKind::FedSa);
        const bool within = std::abs(r.final_accuracy - 90.0) <= 3.0 && ctx.run_seconds[id] < 900.0;
        ok = ok && within;
        detail += std::string(agr::to_string(kind)) + " " + fmt(r.final_accuracy) + "% ";
    }
    return {ok, detail + "(target 90 +- 3)"};
}

Outcome criterion4(Context& ctx) {
    const auto t0 = Clock::now();
    std::vector<int> reach;
    std::string detail;
    for (double k : {0.1, 0.3, 0.5}) {
        const auto& res = run_once(ctx, linear_plant_config(k));
        const double initial = res.records.front().offset_err_norm;
        int hit = -1;
        for (std::size_t t = 0; t < res.records.size(); ++t) {
            if (res.records[t].offset_err_norm <= 0.1 * initial) {
                hit = static_cast<int>(t);
                break;
            }
        }
        reach.push_back(hit);
        detail += "k=" + fmt(k) + ": " + std::to_string(hit) + " rounds; ";
    }
    const double secs = seconds_since(t0);
    const bool ok = reach[0] >= 0 && reach[1] >= 0 && reach[2] >= 0 && reach[0] > reach[1] && reach[1] > reach[2] &&
                    secs < 120.0;
    return {ok, detail + fmt(secs, 3) + " s"};
}

Outcome criterion5(Context& ctx) {
    auto cfg = mnist_config(ctx, "fedavg-fedsa-switch", agr::AggregatorKind::FedAvg, sim::AttackKind::FedSa);
    cfg.attack.switch_round = 50;
    cfg.attack.switch_target = 85.0;
    const auto& r = run_once(ctx, cfg);
    const double before = r.records[49].global_accuracy * 100.0;
    const bool ok = std::abs(r.final_accuracy - 85.0) <= 3.0 && ctx.run_seconds[cfg.id] < 900.0;
    return {ok, "round 49 " + fmt(before) + "%, final " + fmt(r.final_accuracy) + "% (target 85 +- 3)"};
}

Outcome criterion6(Context& ctx) {
    bool ok = true;
    std::string detail;
    for (auto [name, kind] : {std::pair{"fedavg", agr::AggregatorKind::FedAvg},
                              std::pair{"mkrum", agr::AggregatorKind::MultiKrum}}) {
        const auto& fed = mnist_run(ctx, std::string(name) + "-fedsa", kind, sim::AttackKind::FedSa);
        const auto& lie = mnist_run(ctx, std::string(name) + "-lie", kind, sim::AttackKind::Lie);
        const double theta = sim::metric_theta(lie.final_delta, fed.final_delta);
        const bool good = std::abs(fed.final_delta) < std::abs(lie.final_delta) && theta >= 2.0;
        ok = ok && good;
        detail += std::string(name) + ": |d| FedSA " + fmt(std::abs(fed.final_delta)) + " vs LIE " +
                  fmt(std::abs(lie.final_delta)) + ", theta " + fmt(theta) + "; ";
    }
    return {ok, detail};
}

Outcome criterion7(Context& ctx) {
    bool ok = true;
    std::string detail;
    for (auto [name, kind] : {std::pair{"mkrum", agr::AggregatorKind::MultiKrum},
                              std::pair{"bulyan", agr::AggregatorKind::Bulyan}}) {
        const auto& r = mnist_run(ctx, std::string(name) + "-fedsa", kind, sim::AttackKind::FedSa);
        const auto rate = sim::detection_rate(r.records);
        const bool good = rate && *rate >= 0.5 && std::abs(r.final_accuracy - 90.0) <= 3.0;
        ok = ok && good;
        detail += std::string(name) + ": malicious selected in " + (rate ? fmt(100.0 * *rate) : "n/a") +
                  "% of rounds, final " + fmt(r.final_accuracy) + "%; ";
    }
    return {ok, detail};
}

Outcome criterion8(Context&) {
    const auto t0 = Clock::now();
    std::ostringstream out;
    cli::oracle_check(out);
    const double secs = seconds_since(t0);
    const std::set<std::string> agrs{"fedavg", "median", "trmean", "normbound", "mkrum",
                                     "bulyan", "fltrust", "cc",     "dnc"};
    std::istringstream in(out.str());
    std::string line;
    int passed = 0, seen = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string status, name;
        ls >> status >> name;
        if (!agrs.count(name)) continue;
        ++seen;
        if (status == "PASS") ++passed;
    }
    return {seen == 9 && passed == 9 && secs < 10.0,
            std::to_string(passed) + "/9 aggregators pass 200 random instances each, " + fmt(secs, 3) + " s"};
}

Outcome criterion9(Context&) {
    const auto t0 = Clock::now();
    RngStream rng(20260101, 9);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> dims;
        do {
            dims = {1 + rng.index(8)};
            const std::size_t hidden = rng.index(3);
            for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + rng.index(8));
            dims.push_back(2 + rng.index(4));
        } while (num::param_count(dims) > 200);
        auto model = num::uniform_init(dims, 1.0, rng);
        const std::size_t rows = 1 + rng.index(8);
        num::Matrix batch(rows, dims.front());
        for (auto& v : batch.data) v = rng.normal();
        std::vector<int> labels(rows);
        for (auto& y : labels) y = static_cast<int>(rng.index(dims.back()));
        const auto g = num::loss_grad(model, batch, labels).grad;
        double num = 0.0, den = 1e-8;
        for (std::size_t j = 0; j < model.params.size(); ++j) {
            const double keep = model.params[j], h = 1e-5;
            model.params[j] = keep + h;
            const double up = num::loss_grad(model, batch, labels).loss;
            model.params[j] = keep - h;
            const double down = num::loss_grad(model, batch, labels).loss;
            model.params[j] = keep;
            const double fd = (up - down) / (2 * h);
            num = std::max(num, std::abs(fd - g[j]));
            den = std::max({den, std::abs(fd), std::abs(g[j])});
        }
        worst = std::max(worst, num / den);
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 10.0, "max relative error " + fmt(worst) + " over 100 nets, " + fmt(secs, 3) + " s"};
}

std::string csv_without_wallclock(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
}

Outcome criterion10(Context& ctx) {
    const auto& first = mnist_run(ctx, "fedavg-fedsa", agr::AggregatorKind::FedAvg, sim::AttackKind::FedSa);
    (void)first;
    auto cfg = mnist_config(ctx, "fedavg-fedsa-repeat", agr::AggregatorKind::FedAvg, sim::AttackKind::FedSa);
    run_once(ctx, cfg);
    const auto a = csv_without_wallclock(ctx.work_dir / "runs" / "fedavg-fedsa.rounds.csv");
    const auto b = csv_without_wallclock(ctx.work_dir / "runs" / "fedavg-fedsa-repeat.rounds.csv");
    return {!a.empty() && a == b, std::string(a == b ? "round CSVs identical" : "round CSVs differ") + " (" +
                                      std::to_string(std::count(a.begin(), a.end(), '\n')) + " lines)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedSA acceptance criteria"};
    std::string data_root = "data", work_dir = "acceptance";
    std::vector<int> only;
    app.add_option("--data-root", data_root, "Directory holding mnist/");
    app.add_option("--work-dir", work_dir, "Scratch directory for runs and the shadow-library cache");
    app.add_option("--only", only, "Subset of criteria to evaluate")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    Context ctx;
    ctx.data_root = data_root;
    ctx.work_dir = work_dir;
    fs::create_directories(ctx.work_dir);

    const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
        {"ODE-oracle fidelity", criterion1},       {"Lyapunov numerics", criterion2},
        {"objective precision", criterion3},       {"speed control", criterion4},
        {"adjustable objective", criterion5},      {"baseline dominance", criterion6},
        {"evasion", criterion7},                   {"aggregator oracles", criterion8},
        {"gradient check", criterion9},            {"determinism", criterion10},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome out;
        try {
            out = criteria[i].second(ctx);
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        if (!out.pass) ++failures;
        std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << criteria[i].first << "  "
                  << out.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
