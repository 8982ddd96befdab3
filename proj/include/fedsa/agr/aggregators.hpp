#pragma once

// Server-side aggregation rules. Every rule consumes client *models* and
// returns the next global model. Rules that are defined on updates
// (norm bounding, FLTrust, centered clipping) subtract `global_model`
// first and add it back to their aggregated update.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedsa/vec.hpp"

namespace fedsa::agr {

enum class AggregatorKind {
    FedAvg,
    Median,
    TrimmedMean,
    NormBounding,
    MultiKrum,
    Bulyan,
    FlTrust,
    CenteredClipping,
    Dnc,
};

std::string_view to_string(AggregatorKind kind);
AggregatorKind parse_aggregator(std::string_view name);  // throws ConfigError
bool exposes_selection(AggregatorKind kind);

struct AggregationInput {
    std::vector<ParamVec> client_models;
    std::size_t assumed_malicious = 0;  // robustness budget m-hat; trim count b for trimmed mean / Bulyan

    std::optional<ParamVec> global_model;  // update-space reference; zero vector when absent

    double norm_bound_tau = 1.0;

    double cc_radius_tau = 10.0;
    int cc_iters = 3;
    std::optional<ParamVec> cc_start;  // update space; previous round's aggregated update

    std::optional<ParamVec> server_root_update;  // FLTrust g0

    std::size_t dnc_subsample_dim = 1000;
    double dnc_filter_frac = 1.0;
    int dnc_iters = 1;
    std::uint64_t dnc_seed = 0;

    std::optional<std::size_t> mkrum_select;  // c; defaults to N - assumed_malicious
    bool bulyan_strict = false;

    std::size_t n() const noexcept { return client_models.size(); }
    std::size_t dim() const noexcept { return client_models.empty() ? 0 : client_models.front().size(); }
};

struct AggregationOutcome {
    ParamVec aggregate;
    std::optional<std::vector<std::size_t>> selected_indices;  // 0-based, ascending
    std::optional<std::vector<double>> weights;                // FLTrust trust scores
    std::vector<std::string> warnings;
};

AggregationOutcome fed_avg(const AggregationInput& in);
AggregationOutcome coord_median(const AggregationInput& in);
AggregationOutcome trimmed_mean(const AggregationInput& in);
AggregationOutcome norm_bounding(const AggregationInput& in);

// Index of the client with the smallest sum of squared distances to its
// N - m - 2 nearest peers; ties go to the lowest index.
std::size_t krum_select(const AggregationInput& in);
AggregationOutcome multi_krum(const AggregationInput& in, std::size_t c);
AggregationOutcome multi_krum(const AggregationInput& in);
AggregationOutcome bulyan(const AggregationInput& in);
AggregationOutcome fltrust(const AggregationInput& in);
AggregationOutcome centered_clipping(const AggregationInput& in);
AggregationOutcome dnc(const AggregationInput& in);

AggregationOutcome aggregate(AggregatorKind kind, const AggregationInput& in);

}  // namespace fedsa::agr
