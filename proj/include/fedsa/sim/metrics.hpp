#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedsa/rng.hpp"

namespace fedsa::sim {

struct RoundRecord;

// Signed deviation of the achieved accuracy from the target, in percent of
// the target: ((A_T - A_0) / A_0) * 100. Inputs share a unit (both percent
// or both fractions).
double metric_delta(double achieved, double target);

// |delta_other| / |delta_fedsa|; +infinity when delta_fedsa is zero.
double metric_theta(double delta_other, double delta_fedsa);

// Fraction of rounds (with a selection outcome) in which at least one
// malicious model survived selection. Empty when the aggregator exposes no
// selection.
std::optional<double> detection_rate(std::span<const RoundRecord> records);

// Uniform sample of ceil(rate * n) distinct client ids, ascending.
std::vector<std::size_t> sample_clients(std::size_t n, double rate, RngStream& rng);

}  // namespace fedsa::sim
