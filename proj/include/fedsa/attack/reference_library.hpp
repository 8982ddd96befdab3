#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedsa/vec.hpp"

namespace fedsa::attack {

struct Checkpoint {
    std::string id;
    ParamVec params;
    double accuracy = 0.0;  // on the shared test set, in [0, 1]
};

// Checkpoints from a shadow honest training run, used as reference models.
//
// On disk: one `<id>.bin` per checkpoint holding r little-endian float64
// values, plus `manifest.txt` with one "<id> <accuracy> <r>" line each.
struct ReferenceLibrary {
    std::vector<Checkpoint> checkpoints;

    // Checkpoint whose accuracy is closest to `target`; ties keep the earliest.
    std::size_t closest(double target) const;

    void save(const std::filesystem::path& dir) const;
    static ReferenceLibrary load(const std::filesystem::path& dir);
};

struct OffsetCalibration {
    ParamVec C;
    std::size_t checkpoint = 0;
    std::optional<std::string> warning;  // set when no checkpoint is within 2 points of the target
};

// C = k (w_target - w_ref), so that the controller's equilibrium
// w_ref + C / k lands on the checkpoint nearest to `target_accuracy`.
OffsetCalibration calibrate_C(const ReferenceLibrary& lib, std::span<const double> w_ref, double target_accuracy,
                              double k);

}  // namespace fedsa::attack
