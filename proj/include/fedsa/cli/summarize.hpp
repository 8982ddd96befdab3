#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fedsa::cli {

struct SummaryCell {
    std::string id;
    double final_accuracy = 0.0;   // percent
    double target_accuracy = 0.0;  // percent
    double delta = 0.0;
};

// Rows are aggregators, columns are attacks. theta[(row, baseline)] compares
// the row's FedSA cell with the baseline cell.
struct SummaryTable {
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::map<std::pair<std::string, std::string>, SummaryCell> cells;
    std::map<std::pair<std::string, std::string>, double> theta;
    std::vector<std::string> warnings;

    std::string text() const;
    std::string json() const;
};

// Reads every *.summary.json under `dir`. Malformed files are skipped with a
// warning; throws ConfigError when none is usable.
SummaryTable summarize(const std::filesystem::path& dir);

}  // namespace fedsa::cli
