#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fedsa/sim/simulator.hpp"

namespace fedsa::cli {

struct ExperimentManifest {
    std::vector<sim::SimConfig> experiments;
    std::filesystem::path output_dir;
};

// INI document:
//
//   [manifest]
//   output_dir = results          ; relative to the manifest file
//
//   [defaults]                    ; optional, same keys as an experiment
//   clients = 50
//
//   [experiment.<id>]
//   dataset = synthetic           ; required: dataset, rounds, agr, attack
//   rounds = 30
//   agr = fedavg
//   attack = none
//
// Unknown keys and sections are rejected with their full key path.
ExperimentManifest parse_config(const std::filesystem::path& path);
ExperimentManifest parse_config_text(const std::string& text, const std::filesystem::path& base_dir = ".");

// Flat key/value view of a config, in the manifest's vocabulary. Feeding the
// pairs back through an experiment section reproduces the config.
std::vector<std::pair<std::string, std::string>> config_to_keys(const sim::SimConfig& cfg);

}  // namespace fedsa::cli
