#include "fedsa/cli/runner.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fedsa/errors.hpp"
#include "fedsa/sim/metrics.hpp"

namespace fedsa::cli {

namespace {

using nlohmann::json;

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument(s);
    return v;
}

int parse_int(const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument(s);
    return v;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_rounds_csv(const std::filesystem::path& path, const std::vector<sim::RoundRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << kRoundsHeader << '\n';
    for (const auto& r : records) {
        out << r.round << ',' << format_double(r.global_accuracy) << ',' << format_double(r.delta) << ','
            << format_double(r.err_norm) << ',' << format_double(r.surface_norm) << ',' << r.selected_malicious << ','
            << r.selected_total << ',' << format_double(r.wallclock_ms) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path.string());
}

std::vector<sim::RoundRecord> read_rounds_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kRoundsHeader) throw ConfigError(path.string() + ": unexpected header");
    std::vector<sim::RoundRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
        try {
            sim::RoundRecord r;
            r.round = parse_int(f[0]);
            r.global_accuracy = parse_double(f[1]);
            r.delta = parse_double(f[2]);
            r.err_norm = parse_double(f[3]);
            r.surface_norm = parse_double(f[4]);
            r.selected_malicious = parse_int(f[5]);
            r.selected_total = parse_int(f[6]);
            r.wallclock_ms = parse_double(f[7]);
            out.push_back(r);
        } catch (const std::logic_error&) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return out;
}

std::string summary_json(const sim::ExperimentResult& result) {
    json j;
    const auto& c = result.config;
    j["id"] = c.id;
    j["seed"] = result.seed;
    j["agr"] = std::string(agr::to_string(c.agr.kind));
    j["attack"] = std::string(sim::to_string(c.attack.kind));
    j["rounds"] = result.records.size();
    j["target_accuracy"] = result.target_accuracy;
    j["final_accuracy"] = result.final_accuracy;
    j["final_delta"] = result.final_delta;
    j["reference_checkpoint_accuracy"] =
        result.reference_checkpoint_accuracy ? json(*result.reference_checkpoint_accuracy) : json(nullptr);
    const auto det = sim::detection_rate(result.records);
    j["detection_rate"] = det ? json(*det) : json(nullptr);
    json theta = json::object();
    for (const auto& [k, v] : result.theta_vs) theta[k] = number_or_null(v);  // null: FedSA hit its target exactly
    j["theta_vs"] = theta;
    j["warnings"] = result.warnings;
    json cfg = json::object();
    for (const auto& [k, v] : config_to_keys(c)) cfg[k] = v;
    j["config"] = cfg;
    return j.dump(2);
}

void write_summary_json(const std::filesystem::path& path, const sim::ExperimentResult& result) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << summary_json(result) << '\n';
    if (!out) throw ConfigError("write failed: " + path.string());
}

void fill_theta(std::vector<sim::ExperimentResult>& results) {
    for (auto& fed : results) {
        if (fed.config.attack.kind != sim::AttackKind::FedSa) continue;
        fed.theta_vs.clear();
        for (const auto& other : results) {
            const auto kind = other.config.attack.kind;
            if (kind == sim::AttackKind::FedSa || kind == sim::AttackKind::None) continue;
            if (other.config.agr.kind != fed.config.agr.kind) continue;
            fed.theta_vs.emplace(std::string(sim::to_string(kind)), sim::metric_theta(other.final_delta, fed.final_delta));
        }
    }
}

int run_manifest(const ExperimentManifest& manifest, const RunOptions& opts) {
    std::ostream& log = opts.log ? *opts.log : std::cerr;
    if (manifest.experiments.empty()) return 0;
    const auto dir = opts.out ? *opts.out : manifest.output_dir;
    ensure_dir(dir);

    bool failed = false;
    std::vector<sim::ExperimentResult> done;
    for (auto cfg : manifest.experiments) {
        if (opts.seed) cfg.seed = *opts.seed;
        if (opts.threads) cfg.threads = *opts.threads;
        try {
            log << "[" << cfg.id << "] running " << cfg.rounds << " rounds\n" << std::flush;
            auto res = sim::run_experiment(cfg);
            for (const auto& w : res.warnings) log << "[" << cfg.id << "] warning: " << w << '\n';
            write_rounds_csv(dir / (cfg.id + ".rounds.csv"), res.records);
            write_summary_json(dir / (cfg.id + ".summary.json"), res);
            log << "[" << cfg.id << "] final accuracy " << res.final_accuracy << "% (delta " << res.final_delta << ")\n";
            done.push_back(std::move(res));
        } catch (const std::exception& e) {
            failed = true;
            log << "[" << cfg.id << "] failed: " << e.what() << '\n';
        }
    }

    fill_theta(done);
    for (const auto& res : done) {
        if (res.theta_vs.empty()) continue;
        try {
            write_summary_json(dir / (res.config.id + ".summary.json"), res);
        } catch (const std::exception& e) {
            failed = true;
            log << "[" << res.config.id << "] failed: " << e.what() << '\n';
        }
    }
    return failed ? 1 : 0;
}

}  // namespace fedsa::cli
