#include "fedsa/agr/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsa/errors.hpp"
#include "fedsa/rng.hpp"

namespace fedsa::agr {

namespace {

void check_input(const AggregationInput& in, const char* rule) {
    if (in.client_models.empty()) throw InvalidInput(std::string(rule) + ": no client models");
    const auto r = in.dim();
    for (const auto& x : in.client_models) require_same_size(x.size(), r, rule);
    if (in.global_model) require_same_size(in.global_model->size(), r, rule);
}

ParamVec reference(const AggregationInput& in) { return in.global_model ? *in.global_model : zeros(in.dim()); }

std::vector<ParamVec> updates(const AggregationInput& in, const ParamVec& ref) {
    std::vector<ParamVec> out;
    out.reserve(in.n());
    for (const auto& x : in.client_models) out.push_back(sub(x, ref));
    return out;
}

ParamVec mean_of_indices(const std::vector<ParamVec>& xs, const std::vector<std::size_t>& idx) {
    ParamVec out(xs.front().size(), 0.0);
    for (auto i : idx) axpy(1.0, xs[i], out);
    for (auto& v : out) v /= static_cast<double>(idx.size());
    return out;
}

// Median of a scratch buffer (reordered in place).
double median_inplace(std::vector<double>& vals) {
    const std::size_t n = vals.size();
    const std::size_t mid = n / 2;
    std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
    const double hi = vals[mid];
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(vals.begin(), vals.begin() + mid);
    return 0.5 * (lo + hi);
}

std::vector<std::vector<double>> pairwise_sq_dist(const std::vector<ParamVec>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = sq_dist(xs[i], xs[j]);
    }
    return d;
}

// Krum winner among `pool`, scoring each against its `neighbors` nearest peers.
std::size_t krum_winner(const std::vector<std::vector<double>>& dist, const std::vector<std::size_t>& pool,
                        std::size_t neighbors) {
    std::size_t best = pool.front();
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<double> row;
    for (auto i : pool) {
        row.clear();
        for (auto j : pool) {
            if (j != i) row.push_back(dist[i][j]);
        }
        const std::size_t k = std::min(neighbors, row.size());
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
        const double score = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
        // Strict comparison keeps the lowest index on ties; pool is ascending.
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

// Repeated Krum with removal. Pools that shrink below m + 3 keep scoring
// against at least one neighbour.
std::vector<std::size_t> iterative_krum(const std::vector<ParamVec>& xs, std::size_t m, std::size_t count) {
    const auto dist = pairwise_sq_dist(xs);
    std::vector<std::size_t> pool(xs.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    while (chosen.size() < count) {
        const std::size_t n = pool.size();
        const std::size_t neighbors = (n >= m + 3) ? n - m - 2 : std::min<std::size_t>(1, n - 1);
        const auto w = krum_winner(dist, pool, neighbors);
        chosen.push_back(w);
        pool.erase(std::find(pool.begin(), pool.end(), w));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace

std::string_view to_string(AggregatorKind kind) {
    switch (kind) {
        case AggregatorKind::FedAvg: return "fedavg";
        case AggregatorKind::Median: return "median";
        case AggregatorKind::TrimmedMean: return "trmean";
        case AggregatorKind::NormBounding: return "normbound";
        case AggregatorKind::MultiKrum: return "mkrum";
        case AggregatorKind::Bulyan: return "bulyan";
        case AggregatorKind::FlTrust: return "fltrust";
        case AggregatorKind::CenteredClipping: return "cc";
        case AggregatorKind::Dnc: return "dnc";
    }
    return "?";
}

AggregatorKind parse_aggregator(std::string_view name) {
    for (auto k : {AggregatorKind::FedAvg, AggregatorKind::Median, AggregatorKind::TrimmedMean,
                   AggregatorKind::NormBounding, AggregatorKind::MultiKrum, AggregatorKind::Bulyan,
                   AggregatorKind::FlTrust, AggregatorKind::CenteredClipping, AggregatorKind::Dnc}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown aggregator '" + std::string(name) + "'");
}

bool exposes_selection(AggregatorKind kind) {
    return kind == AggregatorKind::MultiKrum || kind == AggregatorKind::Bulyan || kind == AggregatorKind::Dnc;
}

AggregationOutcome fed_avg(const AggregationInput& in) {
    check_input(in, "fed_avg");
    return {mean_of(in.client_models), std::nullopt, std::nullopt, {}};
}

AggregationOutcome coord_median(const AggregationInput& in) {
    check_input(in, "coord_median");
    const std::size_t n = in.n(), r = in.dim();
    ParamVec out(r);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = in.client_models[i][j];
        out[j] = median_inplace(col);
    }
    return {std::move(out), std::nullopt, std::nullopt, {}};
}

AggregationOutcome trimmed_mean(const AggregationInput& in) {
    check_input(in, "trimmed_mean");
    const std::size_t n = in.n(), r = in.dim(), b = in.assumed_malicious;
    if (n <= 2 * b) {
        throw InvalidInput("trimmed_mean: need N > 2b (N=" + std::to_string(n) + ", b=" + std::to_string(b) + ")");
    }
    ParamVec out(r);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = in.client_models[i][j];
        std::sort(col.begin(), col.end());
        double acc = 0.0;
        for (std::size_t i = b; i < n - b; ++i) acc += col[i];
        out[j] = acc / static_cast<double>(n - 2 * b);
    }
    return {std::move(out), std::nullopt, std::nullopt, {}};
}

AggregationOutcome norm_bounding(const AggregationInput& in) {
    check_input(in, "norm_bounding");
    if (!(in.norm_bound_tau > 0.0)) throw InvalidInput("norm_bounding: tau must be > 0");
    const ParamVec ref = reference(in);
    auto ups = updates(in, ref);
    for (auto& u : ups) {
        const double nrm = norm2(u);
        if (nrm > in.norm_bound_tau) {
            const double s = in.norm_bound_tau / nrm;
            for (auto& v : u) v *= s;
        }
    }
    return {add(ref, mean_of(ups)), std::nullopt, std::nullopt, {}};
}

std::size_t krum_select(const AggregationInput& in) {
    check_input(in, "krum_select");
    const std::size_t n = in.n(), m = in.assumed_malicious;
    if (n < m + 3) throw InvalidInput("krum_select: need N >= m + 3");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    return krum_winner(pairwise_sq_dist(in.client_models), pool, n - m - 2);
}

AggregationOutcome multi_krum(const AggregationInput& in, std::size_t c) {
    check_input(in, "multi_krum");
    const std::size_t n = in.n(), m = in.assumed_malicious;
    if (c < 1 || c > n) throw InvalidInput("multi_krum: selection count must be in [1, N]");
    if (n < m + 3) throw InvalidInput("multi_krum: need N >= m + 3 for the first Krum step");
    auto chosen = iterative_krum(in.client_models, m, c);
    AggregationOutcome out;
    out.aggregate = mean_of_indices(in.client_models, chosen);
    out.selected_indices = std::move(chosen);
    return out;
}

AggregationOutcome multi_krum(const AggregationInput& in) {
    const std::size_t c = in.mkrum_select.value_or(in.n() > in.assumed_malicious ? in.n() - in.assumed_malicious : 1);
    return multi_krum(in, c);
}

AggregationOutcome bulyan(const AggregationInput& in) {
    check_input(in, "bulyan");
    const std::size_t n = in.n(), m = in.assumed_malicious, r = in.dim();
    AggregationOutcome out;
    std::size_t theta = 0, beta = 0;
    if (n >= 4 * m + 3) {
        theta = n - 2 * m;
        beta = theta - 2 * m;
    } else {
        if (in.bulyan_strict) {
            throw InvalidInput("bulyan: need N >= 4m + 3 (N=" + std::to_string(n) + ", m=" + std::to_string(m) + ")");
        }
        theta = n > 2 * m ? n - 2 * m : 1;
        beta = theta > 2 * m ? theta - 2 * m : 1;
        out.warnings.push_back("bulyan: N < 4m + 3, selection clamped to theta=" + std::to_string(theta) +
                               ", beta=" + std::to_string(beta));
    }
    auto chosen = iterative_krum(in.client_models, m, theta);

    out.aggregate.assign(r, 0.0);
    std::vector<double> col(chosen.size());
    std::vector<double> scratch;
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t k = 0; k < chosen.size(); ++k) col[k] = in.client_models[chosen[k]][j];
        scratch = col;
        const double med = median_inplace(scratch);
        // Closest to the median first; equal distances resolved by value.
        std::sort(col.begin(), col.end(), [med](double a, double b) {
            const double da = std::abs(a - med), db = std::abs(b - med);
            return da != db ? da < db : a < b;
        });
        double acc = 0.0;
        for (std::size_t k = 0; k < beta; ++k) acc += col[k];
        out.aggregate[j] = acc / static_cast<double>(beta);
    }
    out.selected_indices = std::move(chosen);
    return out;
}

AggregationOutcome fltrust(const AggregationInput& in) {
    check_input(in, "fltrust");
    if (!in.server_root_update) throw InvalidInput("fltrust: server root update missing");
    const ParamVec& g0 = *in.server_root_update;
    require_same_size(g0.size(), in.dim(), "fltrust root update");
    const double g0_norm = norm2(g0);
    if (!(g0_norm > 0.0)) throw InvalidInput("fltrust: server root update is zero");

    const ParamVec ref = reference(in);
    const auto ups = updates(in, ref);
    std::vector<double> trust(in.n(), 0.0);
    ParamVec acc(in.dim(), 0.0);
    double trust_sum = 0.0;
    for (std::size_t i = 0; i < ups.size(); ++i) {
        const double nrm = norm2(ups[i]);
        if (!(nrm > 0.0)) continue;
        trust[i] = std::max(0.0, dot(ups[i], g0) / (nrm * g0_norm));
        if (trust[i] > 0.0) {
            axpy(trust[i] * g0_norm / nrm, ups[i], acc);
            trust_sum += trust[i];
        }
    }
    if (trust_sum > 0.0) {
        for (auto& v : acc) v /= trust_sum;
    }
    AggregationOutcome out;
    out.aggregate = add(ref, acc);
    out.weights = std::move(trust);
    return out;
}

AggregationOutcome centered_clipping(const AggregationInput& in) {
    check_input(in, "centered_clipping");
    if (!(in.cc_radius_tau > 0.0)) throw InvalidInput("centered_clipping: tau must be > 0");
    if (in.cc_iters < 1) throw InvalidInput("centered_clipping: cc_iters must be >= 1");
    const ParamVec ref = reference(in);
    const auto ups = updates(in, ref);
    ParamVec v = in.cc_start ? *in.cc_start : zeros(in.dim());
    require_same_size(v.size(), in.dim(), "centered_clipping start");
    const double inv_n = 1.0 / static_cast<double>(ups.size());
    for (int it = 0; it < in.cc_iters; ++it) {
        ParamVec step(v.size(), 0.0);
        for (const auto& u : ups) {
            const ParamVec diff = sub(u, v);
            const double nrm = norm2(diff);
            const double scale = nrm > in.cc_radius_tau ? in.cc_radius_tau / nrm : 1.0;
            axpy(scale * inv_n, diff, step);
        }
        axpy(1.0, step, v);
    }
    return {add(ref, v), std::nullopt, std::nullopt, {}};
}

AggregationOutcome dnc(const AggregationInput& in) {
    check_input(in, "dnc");
    const std::size_t n = in.n(), r = in.dim();
    if (n < 2) throw InvalidInput("dnc: need at least two clients");
    if (!(in.dnc_filter_frac > 0.0) || in.dnc_filter_frac > 1.0) throw InvalidInput("dnc: filter_frac must be in (0, 1]");
    if (in.dnc_iters < 1) throw InvalidInput("dnc: iters must be >= 1");
    if (in.dnc_subsample_dim == 0) throw InvalidInput("dnc: subsample dim must be positive");

    const std::size_t d = std::min(in.dnc_subsample_dim, r);
    const auto n_remove = std::min<std::size_t>(
        n - 1, static_cast<std::size_t>(std::ceil(in.dnc_filter_frac * static_cast<double>(in.assumed_malicious))));
    constexpr int kPowerSteps = 50;

    RngStream rng(in.dnc_seed, stream::kAggregator);
    std::vector<char> good(n, 1);
    std::vector<std::size_t> coords(r);
    for (int pass = 0; pass < in.dnc_iters; ++pass) {
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (d < r) {
            // Partial Fisher-Yates: the first d entries become a uniform sample.
            for (std::size_t k = 0; k < d; ++k) std::swap(coords[k], coords[k + rng.index(r - k)]);
            std::sort(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(d));
        }

        std::vector<double> mu(d, 0.0);
        for (const auto& x : in.client_models) {
            for (std::size_t k = 0; k < d; ++k) mu[k] += x[coords[k]];
        }
        for (auto& v : mu) v /= static_cast<double>(n);
        std::vector<std::vector<double>> centered(n, std::vector<double>(d));
        double frob = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                centered[i][k] = in.client_models[i][coords[k]] - mu[k];
                frob += centered[i][k] * centered[i][k];
            }
        }
        if (!(frob > 0.0) || n_remove == 0) continue;

        // Top right-singular vector of the centered matrix by power iteration on X^T X.
        RngStream start(0x5eed, static_cast<std::uint64_t>(pass));
        std::vector<double> v(d);
        for (auto& x : v) x = start.normal();
        std::vector<double> proj(n);
        for (int step = 0; step < kPowerSteps; ++step) {
            for (std::size_t i = 0; i < n; ++i) proj[i] = dot(centered[i], v);
            std::fill(v.begin(), v.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) axpy(proj[i], centered[i], v);
            const double nrm = norm2(v);
            if (!(nrm > 0.0)) break;
            for (auto& x : v) x /= nrm;
        }

        std::vector<double> score(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = dot(centered[i], v);
            score[i] = p * p;
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        for (std::size_t k = 0; k < n_remove; ++k) good[order[k]] = 0;
    }

    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < n; ++i) {
        if (good[i]) survivors.push_back(i);
    }
    if (survivors.empty()) throw InvalidInput("dnc: every client was filtered out");
    AggregationOutcome out;
    out.aggregate = mean_of_indices(in.client_models, survivors);
    out.selected_indices = std::move(survivors);
    return out;
}

AggregationOutcome aggregate(AggregatorKind kind, const AggregationInput& in) {
    switch (kind) {
        case AggregatorKind::FedAvg: return fed_avg(in);
        case AggregatorKind::Median: return coord_median(in);
        case AggregatorKind::TrimmedMean: return trimmed_mean(in);
        case AggregatorKind::NormBounding: return norm_bounding(in);
        case AggregatorKind::MultiKrum: return multi_krum(in);
        case AggregatorKind::Bulyan: return bulyan(in);
        case AggregatorKind::FlTrust: return fltrust(in);
        case AggregatorKind::CenteredClipping: return centered_clipping(in);
        case AggregatorKind::Dnc: return dnc(in);
    }
    throw InvalidInput("aggregate: unknown kind");
}

}  // namespace fedsa::agr
