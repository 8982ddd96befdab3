#pragma once

// Baseline untargeted model-poisoning attacks, computed from the malicious
// clients' own honest models ("proxies").

#include <cstddef>
#include <string_view>
#include <vector>

#include "fedsa/vec.hpp"

namespace fedsa::attack {

// LIE: mu - z * sigma per coordinate.
ParamVec lie_attack(const std::vector<ParamVec>& proxies, double z);
ParamVec lie_attack(const std::vector<ParamVec>& proxies, std::size_t n_total, std::size_t n_malicious);
// z = Phi^-1((N - s) / N) with s = floor(N/2) + 1 - m.
double lie_z(std::size_t n_total, std::size_t n_malicious);

enum class PerturbMode { UnitMean, Std };
PerturbMode parse_perturb_mode(std::string_view name);

struct ScaledPerturbation {
    ParamVec model;
    double gamma = 0.0;
};

// mu + gamma * p with the largest gamma keeping the candidate's maximum
// distance to any proxy within the proxies' diameter.
ScaledPerturbation min_max_attack(const std::vector<ParamVec>& proxies, PerturbMode mode);
// Same, with the candidate's sum of squared distances bounded by the largest
// such sum of any proxy.
ScaledPerturbation min_sum_attack(const std::vector<ParamVec>& proxies, PerturbMode mode);

// Constraint checks shared with tests.
bool min_max_feasible(const std::vector<ParamVec>& proxies, std::span<const double> candidate);
bool min_sum_feasible(const std::vector<ParamVec>& proxies, std::span<const double> candidate);

}  // namespace fedsa::attack
