#include "fedsa/cli/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fedsa/errors.hpp"
#include "fedsa/sim/metrics.hpp"

namespace fedsa::cli {

namespace {

using nlohmann::json;

std::string cell_text(const SummaryCell& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", c.final_accuracy, c.delta);
    return buf;
}

std::string theta_text(double t) {
    if (!std::isfinite(t)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", t);
    return buf;
}

void add_unique(std::vector<std::string>& xs, const std::string& x) {
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
}

}  // namespace

SummaryTable summarize(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("not a results directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        const std::string suffix = ".summary.json";
        if (entry.is_regular_file() && name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    SummaryTable t;
    for (const auto& f : files) {
        SummaryCell cell;
        std::string row, col;
        try {
            std::ifstream in(f);
            const json j = json::parse(in);
            cell.id = j.at("id").get<std::string>();
            cell.final_accuracy = j.at("final_accuracy").get<double>();
            cell.target_accuracy = j.at("target_accuracy").get<double>();
            cell.delta = j.at("final_delta").get<double>();
            row = j.at("agr").get<std::string>();
            col = j.at("attack").get<std::string>();
        } catch (const std::exception& e) {
            t.warnings.push_back("skipping " + f.string() + ": " + e.what());
            continue;
        }
        const auto key = std::make_pair(row, col);
        if (t.cells.count(key)) {
            t.warnings.push_back("skipping " + f.string() + ": cell (" + row + ", " + col + ") already filled by " +
                                 t.cells[key].id);
            continue;
        }
        add_unique(t.rows, row);
        add_unique(t.columns, col);
        t.cells.emplace(key, cell);
    }
    if (t.cells.empty()) throw ConfigError("no usable summary JSON under " + dir.string());

    for (const auto& row : t.rows) {
        const auto fed = t.cells.find({row, "fedsa"});
        if (fed == t.cells.end()) continue;
        for (const auto& col : t.columns) {
            if (col == "fedsa" || col == "none") continue;
            const auto other = t.cells.find({row, col});
            if (other == t.cells.end()) continue;
            t.theta[{row, col}] = sim::metric_theta(other->second.delta, fed->second.delta);
        }
    }
    return t;
}

std::string SummaryTable::text() const {
    std::vector<std::string> theta_cols;
    for (const auto& [key, v] : theta) add_unique(theta_cols, key.second);

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"agr"};
    header.insert(header.end(), columns.begin(), columns.end());
    for (const auto& c : theta_cols) header.push_back("theta(" + c + ")");
    grid.push_back(header);
    for (const auto& r : rows) {
        std::vector<std::string> line{r};
        for (const auto& c : columns) {
            auto it = cells.find({r, c});
            line.push_back(it == cells.end() ? "-" : cell_text(it->second));
        }
        for (const auto& c : theta_cols) {
            auto it = theta.find({r, c});
            line.push_back(it == theta.end() ? "-" : theta_text(it->second));
        }
        grid.push_back(line);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::string out;
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out += line[i];
            if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

std::string SummaryTable::json() const {
    nlohmann::json j;
    j["rows"] = rows;
    j["columns"] = columns;
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& [key, c] : cells) {
        cs.push_back({{"agr", key.first},
                      {"attack", key.second},
                      {"id", c.id},
                      {"final_accuracy", c.final_accuracy},
                      {"target_accuracy", c.target_accuracy},
                      {"delta", c.delta}});
    }
    j["cells"] = cs;
    nlohmann::json th = nlohmann::json::array();
    for (const auto& [key, v] : theta) {
        th.push_back({{"agr", key.first},
                      {"baseline", key.second},
                      {"theta", std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr)}});
    }
    j["theta"] = th;
    j["warnings"] = warnings;
    return j.dump(2);
}

}  // namespace fedsa::cli
