#include "fedsa/cli/oracle_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "fedsa/agr/aggregators.hpp"
#include "fedsa/rng.hpp"

namespace fedsa::cli {

double ode_tracking_rms(double k, double C, double e0, double dt, double horizon, double control_gain,
                        attack::Discretization disc) {
    attack::SlidingParams p;
    p.k = k;
    p.control_gain = control_gain;
    p.dt = dt;
    p.jacobian_mode = attack::JacobianMode::AnalyticFedAvg;
    p.theta_mode = attack::ThetaMode::Omniscient;
    p.discretization = disc;
    attack::FedSaController ctl(p, {e0}, {C}, {0.0});
    attack::BenignInfo info;
    info.n_total = 1;
    info.n_malicious = 1;
    info.omniscient_access = true;
    RngStream rng(0, 0);

    const auto steps = static_cast<long>(std::llround(horizon / dt));
    ParamVec w{0.0};
    double acc = 0.0;
    for (long i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double exact = (e0 + C / k) * std::exp(-k * t) - C / k;
        const double e = e0 - w[0];
        acc += (e - exact) * (e - exact);
        w = ctl.act(w, info, rng).submissions.front();
    }
    return std::sqrt(acc / static_cast<double>(steps + 1));
}

namespace {

constexpr int kInstances = 200;
constexpr double kTol = 1e-9;

agr::AggregationInput random_input(RngStream& rng, std::size_t min_n = 1) {
    agr::AggregationInput in;
    const std::size_t n = min_n + rng.index(10 - min_n + 1);
    const std::size_t r = 1 + rng.index(6);
    for (std::size_t i = 0; i < n; ++i) {
        ParamVec x(r);
        for (auto& v : x) v = rng.normal(0.0, 2.0);
        in.client_models.push_back(std::move(x));
    }
    ParamVec g(r);
    for (auto& v : g) v = rng.normal(0.0, 0.5);
    in.global_model = g;
    return in;
}

double max_gap(const ParamVec& a, const ParamVec& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
}

std::vector<double> column(const agr::AggregationInput& in, std::size_t j) {
    std::vector<double> c;
    for (const auto& x : in.client_models) c.push_back(x[j]);
    std::sort(c.begin(), c.end());
    return c;
}

double brute_krum_score(const agr::AggregationInput& in, std::size_t i, std::size_t neighbors) {
    std::vector<double> d;
    for (std::size_t j = 0; j < in.n(); ++j) {
        if (j == i) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < in.dim(); ++c) s += (in.client_models[i][c] - in.client_models[j][c]) * (in.client_models[i][c] - in.client_models[j][c]);
        d.push_back(s);
    }
    std::sort(d.begin(), d.end());
    return std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(neighbors), 0.0);
}

using Check = std::function<bool(RngStream&)>;

bool check_fedavg(RngStream& rng) {
    auto in = random_input(rng);
    ParamVec mean(in.dim(), 0.0);
    for (const auto& x : in.client_models) {
        for (std::size_t j = 0; j < x.size(); ++j) mean[j] += x[j] / static_cast<double>(in.n());
    }
    return max_gap(agr::fed_avg(in).aggregate, mean) <= kTol;
}

bool check_median(RngStream& rng) {
    auto in = random_input(rng);
    const auto out = agr::coord_median(in).aggregate;
    for (std::size_t j = 0; j < in.dim(); ++j) {
        const auto c = column(in, j);
        const std::size_t n = c.size();
        const double med = n % 2 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
        if (std::abs(out[j] - med) > kTol) return false;
    }
    return true;
}

bool check_trmean(RngStream& rng) {
    auto in = random_input(rng);
    in.assumed_malicious = rng.index((in.n() - 1) / 2 + 1);
    const std::size_t b = in.assumed_malicious;
    const auto out = agr::trimmed_mean(in).aggregate;
    for (std::size_t j = 0; j < in.dim(); ++j) {
        const auto c = column(in, j);
        const double m = std::accumulate(c.begin() + static_cast<std::ptrdiff_t>(b), c.end() - static_cast<std::ptrdiff_t>(b), 0.0) /
                         static_cast<double>(c.size() - 2 * b);
        if (std::abs(out[j] - m) > kTol) return false;
    }
    return true;
}

bool check_normbound(RngStream& rng) {
    auto in = random_input(rng);
    in.norm_bound_tau = 0.1 + rng.uniform(0.0, 4.0);
    const auto& g = *in.global_model;
    ParamVec expect(in.dim(), 0.0);
    for (const auto& x : in.client_models) {
        double nrm = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) nrm += (x[j] - g[j]) * (x[j] - g[j]);
        nrm = std::sqrt(nrm);
        const double s = std::min(1.0, in.norm_bound_tau / nrm);
        double clipped = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            expect[j] += s * (x[j] - g[j]) / static_cast<double>(in.n());
            clipped += s * s * (x[j] - g[j]) * (x[j] - g[j]);
        }
        if (std::sqrt(clipped) > in.norm_bound_tau + 1e-12) return false;
    }
    for (std::size_t j = 0; j < expect.size(); ++j) expect[j] += g[j];
    return max_gap(agr::norm_bounding(in).aggregate, expect) <= kTol;
}

bool check_mkrum(RngStream& rng) {
    auto in = random_input(rng, 3);
    in.assumed_malicious = rng.index(in.n() - 3 + 1);
    const std::size_t m = in.assumed_malicious, n = in.n();
    // Krum winner: brute-force argmin over every client.
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double s = brute_krum_score(in, i, n - m - 2);
        if (s < best_score - 1e-12) {
            best_score = s;
            best = i;
        }
    }
    if (agr::krum_select(in) != best) return false;
    const auto one = agr::multi_krum(in, 1);
    if (!one.selected_indices || *one.selected_indices != std::vector<std::size_t>{best}) return false;
    if (max_gap(one.aggregate, in.client_models[best]) > kTol) return false;
    // Full selection is the plain mean.
    if (max_gap(agr::multi_krum(in, n).aggregate, agr::fed_avg(in).aggregate) > kTol) return false;
    const auto def = agr::multi_krum(in);
    return def.selected_indices && def.selected_indices->size() == n - m;
}

bool check_bulyan(RngStream& rng) {
    auto in = random_input(rng, 3);
    in.assumed_malicious = (in.n() - 3) / 4;
    const auto out = agr::bulyan(in);
    const std::size_t theta = in.n() - 2 * in.assumed_malicious;
    if (!out.selected_indices || out.selected_indices->size() != theta) return false;
    for (std::size_t j = 0; j < in.dim(); ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (auto i : *out.selected_indices) {
            lo = std::min(lo, in.client_models[i][j]);
            hi = std::max(hi, in.client_models[i][j]);
        }
        if (out.aggregate[j] < lo - kTol || out.aggregate[j] > hi + kTol) return false;
    }
    return true;
}

bool check_fltrust(RngStream& rng) {
    auto in = random_input(rng);
    ParamVec g0(in.dim());
    for (auto& v : g0) v = rng.normal();
    in.server_root_update = g0;
    const auto& g = *in.global_model;
    double g0n = 0.0;
    for (auto v : g0) g0n += v * v;
    g0n = std::sqrt(g0n);
    ParamVec acc(in.dim(), 0.0);
    double wsum = 0.0;
    for (const auto& x : in.client_models) {
        double d = 0.0, un = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            d += (x[j] - g[j]) * g0[j];
            un += (x[j] - g[j]) * (x[j] - g[j]);
        }
        un = std::sqrt(un);
        const double t = std::max(0.0, d / (un * g0n));
        for (std::size_t j = 0; j < x.size(); ++j) acc[j] += t * g0n * (x[j] - g[j]) / un;
        wsum += t;
    }
    ParamVec expect = g;
    for (std::size_t j = 0; j < expect.size(); ++j) expect[j] += wsum > 0.0 ? acc[j] / wsum : 0.0;
    return max_gap(agr::fltrust(in).aggregate, expect) <= 1e-9 * (1.0 + g0n);
}

bool check_cc(RngStream& rng) {
    auto in = random_input(rng);
    in.cc_radius_tau = 0.2 + rng.uniform(0.0, 3.0);
    double prev_step = std::numeric_limits<double>::infinity();
    ParamVec prev = *in.global_model;
    for (int it = 1; it <= 6; ++it) {
        in.cc_iters = it;
        const auto cur = agr::centered_clipping(in).aggregate;
        double step = 0.0;
        for (std::size_t j = 0; j < cur.size(); ++j) step += (cur[j] - prev[j]) * (cur[j] - prev[j]);
        step = std::sqrt(step);
        if (step > prev_step + 1e-9) return false;
        prev_step = step;
        prev = cur;
    }
    return true;
}

bool check_dnc(RngStream& rng) {
    auto in = random_input(rng, 2);
    in.assumed_malicious = rng.index(in.n() / 2 + 1);
    in.dnc_seed = rng.engine()();
    const auto out = agr::dnc(in);
    if (!out.selected_indices) return false;
    const std::size_t removed = std::min(in.n() - 1, in.assumed_malicious);
    if (out.selected_indices->size() != in.n() - removed) return false;
    ParamVec mean(in.dim(), 0.0);
    for (auto i : *out.selected_indices) {
        for (std::size_t j = 0; j < in.dim(); ++j) mean[j] += in.client_models[i][j] / static_cast<double>(out.selected_indices->size());
    }
    return max_gap(out.aggregate, mean) <= kTol;
}

}  // namespace

int oracle_check(std::ostream& out) {
    bool all = true;

    double worst = 0.0;
    for (double k : {0.5, 1.0, 2.0}) {
        for (double C : {0.0, 0.2}) {
            for (double e0 : {1.0, -1.0}) {
                worst = std::max(worst, ode_tracking_rms(k, C, e0, 0.01, 10.0, 1e-4, attack::Discretization::ExactHold));
            }
        }
    }
    const bool ode_ok = worst <= 1e-3;
    all = all && ode_ok;
    out << (ode_ok ? "PASS" : "FAIL") << "  ode-tracking  worst RMS " << worst << " over 12 (k, C, e0) points\n";

    const std::vector<std::pair<const char*, Check>> suites = {
        {"fedavg", check_fedavg}, {"median", check_median}, {"trmean", check_trmean},
        {"normbound", check_normbound}, {"mkrum", check_mkrum}, {"bulyan", check_bulyan},
        {"fltrust", check_fltrust}, {"cc", check_cc}, {"dnc", check_dnc},
    };
    std::uint64_t stream = 0;
    for (const auto& [name, check] : suites) {
        RngStream rng(20240601, ++stream);
        int failures = 0;
        for (int i = 0; i < kInstances; ++i) {
            if (!check(rng)) ++failures;
        }
        all = all && failures == 0;
        out << (failures == 0 ? "PASS" : "FAIL") << "  " << name << "  " << (kInstances - failures) << "/" << kInstances
            << " random instances\n";
    }
    return all ? 0 : 1;
}

}  // namespace fedsa::cli
