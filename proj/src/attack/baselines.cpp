#include "fedsa/attack/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "fedsa/errors.hpp"

namespace fedsa::attack {

namespace {

void check_proxies(const std::vector<ParamVec>& proxies, const char* who) {
    if (proxies.size() < 2) throw InvalidInput(std::string(who) + ": need at least two proxy models");
    for (const auto& p : proxies) require_same_size(p.size(), proxies.front().size(), who);
}

// Sample standard deviation per coordinate.
ParamVec coord_std(const std::vector<ParamVec>& xs, const ParamVec& mu) {
    ParamVec sd(mu.size(), 0.0);
    for (const auto& x : xs) {
        for (std::size_t j = 0; j < mu.size(); ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]);
    }
    for (auto& v : sd) v = std::sqrt(v / static_cast<double>(xs.size() - 1));
    return sd;
}

double diameter(const std::vector<ParamVec>& xs) {
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) d = std::max(d, std::sqrt(sq_dist(xs[i], xs[j])));
    }
    return d;
}

template <typename Feasible>
ScaledPerturbation scaled_search(const std::vector<ParamVec>& proxies, PerturbMode mode, Feasible feasible) {
    const ParamVec mu = mean_of(proxies);
    ParamVec dir;
    if (mode == PerturbMode::UnitMean) {
        const double n = norm2(mu);
        if (!(n > 0.0)) return {mu, 0.0};
        dir = scaled(mu, -1.0 / n);
    } else {
        dir = scaled(coord_std(proxies, mu), -1.0);
    }
    const double diam = diameter(proxies);
    if (!(diam > 0.0) || !(norm2(dir) > 0.0)) return {mu, 0.0};

    auto candidate = [&](double gamma) {
        ParamVec c = mu;
        axpy(gamma, dir, c);
        return c;
    };
    double lo = 0.0, hi = 10.0 * diam;
    // The bracket is sized for unit directions; widen it when the std
    // direction is short enough that hi itself is still feasible.
    for (int grow = 0; grow < 60 && feasible(candidate(hi)); ++grow) {
        lo = hi;
        hi *= 2.0;
    }
    constexpr int kIterations = 50;
    for (int it = 0; it < kIterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(candidate(mid))) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {candidate(lo), lo};
}

}  // namespace

double lie_z(std::size_t n_total, std::size_t n_malicious) {
    if (n_total == 0) throw InvalidInput("lie_z: no clients");
    if (2 * n_malicious >= n_total) throw InvalidInput("lie: need m < N/2");
    const double s = std::floor(static_cast<double>(n_total) / 2.0) + 1.0 - static_cast<double>(n_malicious);
    const double p = (static_cast<double>(n_total) - s) / static_cast<double>(n_total);
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

ParamVec lie_attack(const std::vector<ParamVec>& proxies, double z) {
    check_proxies(proxies, "lie_attack");
    const ParamVec mu = mean_of(proxies);
    const ParamVec sd = coord_std(proxies, mu);
    ParamVec out(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) out[j] = mu[j] - z * sd[j];
    return out;
}

ParamVec lie_attack(const std::vector<ParamVec>& proxies, std::size_t n_total, std::size_t n_malicious) {
    return lie_attack(proxies, lie_z(n_total, n_malicious));
}

PerturbMode parse_perturb_mode(std::string_view name) {
    if (name == "unit-mean") return PerturbMode::UnitMean;
    if (name == "std") return PerturbMode::Std;
    throw ConfigError("unknown perturbation mode '" + std::string(name) + "'");
}

bool min_max_feasible(const std::vector<ParamVec>& proxies, std::span<const double> candidate) {
    double worst = 0.0;
    for (const auto& x : proxies) worst = std::max(worst, std::sqrt(sq_dist(candidate, x)));
    return worst <= diameter(proxies);
}

bool min_sum_feasible(const std::vector<ParamVec>& proxies, std::span<const double> candidate) {
    double bound = 0.0;
    for (const auto& xi : proxies) {
        double acc = 0.0;
        for (const auto& xj : proxies) acc += sq_dist(xi, xj);
        bound = std::max(bound, acc);
    }
    double total = 0.0;
    for (const auto& x : proxies) total += sq_dist(candidate, x);
    return total <= bound;
}

ScaledPerturbation min_max_attack(const std::vector<ParamVec>& proxies, PerturbMode mode) {
    check_proxies(proxies, "min_max_attack");
    const double diam = diameter(proxies);
    return scaled_search(proxies, mode, [&](const ParamVec& c) {
        for (const auto& x : proxies) {
            if (std::sqrt(sq_dist(c, x)) > diam) return false;
        }
        return true;
    });
}

ScaledPerturbation min_sum_attack(const std::vector<ParamVec>& proxies, PerturbMode mode) {
    check_proxies(proxies, "min_sum_attack");
    double bound = 0.0;
    for (const auto& xi : proxies) {
        double acc = 0.0;
        for (const auto& xj : proxies) acc += sq_dist(xi, xj);
        bound = std::max(bound, acc);
    }
    return scaled_search(proxies, mode, [&](const ParamVec& c) {
        double total = 0.0;
        for (const auto& x : proxies) total += sq_dist(c, x);
        return total <= bound;
    });
}

}  // namespace fedsa::attack
