#include "fedsa/sim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsa/errors.hpp"
#include "fedsa/sim/simulator.hpp"

namespace fedsa::sim {

double metric_delta(double achieved, double target) {
    if (target == 0.0 || !std::isfinite(target)) throw InvalidInput("metric_delta: target accuracy must be non-zero");
    return (achieved - target) / target * 100.0;
}

double metric_theta(double delta_other, double delta_fedsa) {
    if (delta_fedsa == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(delta_other) / std::abs(delta_fedsa);
}

std::optional<double> detection_rate(std::span<const RoundRecord> records) {
    std::size_t rounds = 0, survived = 0;
    for (const auto& r : records) {
        if (r.selected_total < 0) continue;
        ++rounds;
        if (r.selected_malicious > 0) ++survived;
    }
    if (rounds == 0) return std::nullopt;
    return static_cast<double>(survived) / static_cast<double>(rounds);
}

std::vector<std::size_t> sample_clients(std::size_t n, double rate, RngStream& rng) {
    if (!(rate > 0.0 && rate <= 1.0)) throw InvalidInput("sample_clients: rate must lie in (0, 1]");
    // Guard against 0.1 * 30 = 3.0000000000000004 style rounding.
    auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, n == 0 ? 0 : 1, n);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.index(n - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace fedsa::sim
