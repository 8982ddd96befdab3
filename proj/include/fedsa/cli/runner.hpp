#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedsa/cli/manifest.hpp"
#include "fedsa/sim/simulator.hpp"

namespace fedsa::cli {

struct RunOptions {
    std::optional<std::uint64_t> seed;   // overrides every experiment's seed
    std::optional<int> threads;
    std::optional<std::filesystem::path> out;
    std::ostream* log = nullptr;
};

// Runs every experiment, writing <id>.rounds.csv and <id>.summary.json under
// the output directory. A failing experiment does not stop the others.
// Returns 0 iff every experiment completed.
int run_manifest(const ExperimentManifest& manifest, const RunOptions& opts = {});

inline constexpr const char* kRoundsHeader =
    "round,global_accuracy,delta,err_norm,surface_norm,selected_malicious,selected_total,wallclock_ms";

// Shortest-exact-enough text for a double: 17 significant digits.
std::string format_double(double x);

void write_rounds_csv(const std::filesystem::path& path, const std::vector<sim::RoundRecord>& records);
std::vector<sim::RoundRecord> read_rounds_csv(const std::filesystem::path& path);

std::string summary_json(const sim::ExperimentResult& result);
void write_summary_json(const std::filesystem::path& path, const sim::ExperimentResult& result);

// theta_vs for every FedSA result against the baseline attacks that share its
// aggregator, keyed by the baseline's attack name.
void fill_theta(std::vector<sim::ExperimentResult>& results);

}  // namespace fedsa::cli
