// fedsa: run experiment manifests, tabulate results, self-check oracles.
//
//   fedsa run <manifest.ini> [--seed N] [--threads N] [--out DIR]
//   fedsa summarize <results-dir> [--json FILE]
//   fedsa oracle-check
//
// MNIST files are looked up under $FEDSA_DATA_ROOT/mnist unless a manifest
// sets dataset.dir.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "fedsa/cli/manifest.hpp"
#include "fedsa/cli/oracle_check.hpp"
#include "fedsa/cli/runner.hpp"
#include "fedsa/cli/summarize.hpp"

int main(int argc, char** argv) {
    CLI::App app{"FedSA poisoning lab"};
    app.require_subcommand(1);

    std::string manifest_path;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run every experiment in a manifest");
    run->add_option("manifest", manifest_path, "INI manifest")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "Override every experiment's seed");
    auto* threads_opt = run->add_option("--threads", threads, "Client training threads")->check(CLI::PositiveNumber);
    auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides manifest.output_dir)");

    std::string results_dir, json_out;
    auto* summarize = app.add_subcommand("summarize", "Tabulate summary JSONs of a results directory");
    summarize->add_option("dir", results_dir, "Results directory")->required();
    summarize->add_option("--json", json_out, "Also write the table as JSON here");

    auto* oracle = app.add_subcommand("oracle-check", "Run the aggregator and ODE oracle suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto manifest = fedsa::cli::parse_config(manifest_path);
            fedsa::cli::RunOptions opts;
            if (*seed_opt) opts.seed = seed;
            if (*threads_opt) opts.threads = threads;
            if (*out_opt) opts.out = out_dir;
            return fedsa::cli::run_manifest(manifest, opts);
        }
        if (summarize->parsed()) {
            const auto table = fedsa::cli::summarize(results_dir);
            for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << table.text();
            if (!json_out.empty()) {
                std::ofstream f(json_out);
                f << table.json() << '\n';
                if (!f) {
                    std::cerr << "error: cannot write " << json_out << '\n';
                    return 1;
                }
            }
            return 0;
        }
        if (oracle->parsed()) return fedsa::cli::oracle_check(std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
