#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsa/agr/aggregators.hpp"
#include "fedsa/attack/baselines.hpp"
#include "fedsa/attack/reference_library.hpp"
#include "fedsa/attack/sliding_mode.hpp"
#include "fedsa/num/dataset.hpp"
#include "fedsa/num/mlp.hpp"
#include "fedsa/sim/metrics.hpp"

namespace fedsa::sim {

enum class DatasetKind { Mnist, Synthetic };
enum class PartitionKind { Iid, Dirichlet };
enum class AttackKind { None, FedSa, Lie, MinMax, MinSum };
// Static benign clients train once and resubmit that model every round.
enum class BenignMode { Train, Static };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack(std::string_view name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Synthetic;
    std::string mnist_dir;          // empty: $FEDSA_DATA_ROOT/mnist
    std::size_t train_limit = 10000;
    std::size_t test_limit = 0;     // 0 keeps the whole test file
    int n_classes = 2;
    int n_features = 10;
    int n_train = 2000;
    int n_test = 1000;
    double separation = 4.0;
    std::vector<std::size_t> hidden;  // hidden layer widths; empty means softmax regression
};

struct PartitionSpec {
    PartitionKind kind = PartitionKind::Iid;
    double alpha = 0.5;
};

struct AggregatorSpec {
    agr::AggregatorKind kind = agr::AggregatorKind::FedAvg;
    std::optional<std::size_t> assumed_malicious;  // defaults to the true malicious count
    double norm_bound_tau = 1.0;
    double cc_tau = 10.0;
    int cc_iters = 3;
    std::size_t dnc_subsample_dim = 1000;
    double dnc_filter_frac = 1.0;
    int dnc_iters = 1;
    std::optional<std::size_t> mkrum_select;
    bool bulyan_strict = false;
    std::size_t fltrust_root_samples = 100;
};

struct AttackSpec {
    AttackKind kind = AttackKind::None;
    attack::SlidingParams sliding;
    std::optional<double> reference_accuracy;  // percent; defaults to the target
    double surface_init = 0.0;                 // C1, broadcast
    std::optional<int> switch_round;           // objective switch (re-calibrates C)
    std::optional<double> switch_target;       // percent
    int shadow_rounds = 20;
    std::string reference_cache;               // load/save the shadow library here when set
    std::optional<double> lie_z;
    attack::PerturbMode perturb = attack::PerturbMode::UnitMean;
};

struct SimConfig {
    std::string id = "experiment";
    DatasetSpec dataset;
    PartitionSpec partition;
    std::size_t clients = 50;
    std::size_t malicious = 5;
    double sampling_rate = 1.0;
    int rounds = 100;
    double lr = 0.01;
    int batch_size = 5;
    int local_epochs = 3;
    AggregatorSpec agr;
    AttackSpec attack;
    double target_accuracy = 90.0;  // percent
    std::uint64_t seed = 1;
    BenignMode benign_mode = BenignMode::Train;
    double init_half_width = 0.05;
    int threads = 1;

    // Throws ConfigError naming the offending field.
    void validate() const;
};

struct RoundRecord {
    int round = 0;
    double global_accuracy = 0.0;   // after this round's aggregation, in [0, 1]
    double delta = 0.0;             // vs target, percent
    double err_norm = 0.0;          // ||e_t||_2 (FedSA only)
    double surface_norm = 0.0;      // ||s_t||_2 (FedSA only)
    int selected_malicious = -1;    // -1 when the aggregator does not select
    int selected_total = -1;
    double wallclock_ms = 0.0;

    // Telemetry kept in memory only.
    double surface_inf = 0.0;       // ||s_t||_inf
    double offset_err_norm = 0.0;   // ||e_t + C/k||_2
    int malicious_participants = 0;
};

struct ExperimentResult {
    SimConfig config;
    std::vector<RoundRecord> records;
    double target_accuracy = 0.0;   // percent
    double final_accuracy = 0.0;    // percent
    double final_delta = 0.0;
    std::optional<double> reference_checkpoint_accuracy;  // percent
    std::map<std::string, double> theta_vs;               // baseline id -> theta, filled by the runner
    std::vector<std::string> warnings;
    std::uint64_t seed = 0;
};

// Shared, immutable inputs of a run; reusable across simulators.
struct SimData {
    std::shared_ptr<const num::Dataset> train;
    std::shared_ptr<const num::Dataset> test;
};

SimData load_data(const SimConfig& cfg);
std::vector<std::size_t> model_dims(const SimConfig& cfg, const num::Dataset& train);

// Round-by-round federated training with an optional attacker. Malicious
// clients are the last `malicious` client ids.
class Simulator {
public:
    explicit Simulator(SimConfig cfg);
    // `partition` and `init` replace the seed-derived ones (shadow runs).
    Simulator(SimConfig cfg, SimData data, std::shared_ptr<const attack::ReferenceLibrary> library = nullptr,
              std::optional<num::Partition> partition = std::nullopt, std::optional<ParamVec> init = std::nullopt);
    ~Simulator();
    Simulator(Simulator&&) noexcept;
    Simulator& operator=(Simulator&&) noexcept;

    RoundRecord run_round();
    ExperimentResult run();

    // Re-targets a running FedSA attack (percent).
    void set_target(double target_percent);

    int round() const noexcept;
    const ParamVec& global() const noexcept;
    const SimConfig& config() const noexcept;
    const num::Partition& partition() const noexcept;
    const attack::FedSaController* controller() const noexcept;
    std::shared_ptr<const attack::ReferenceLibrary> library() const noexcept;
    const std::vector<std::string>& warnings() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ExperimentResult run_experiment(const SimConfig& cfg);

// Honest FedAvg run from `init` that checkpoints every round whose accuracy
// enters a new whole-percent bucket (plus the initial model).
attack::ReferenceLibrary build_reference_library(const SimConfig& cfg, const SimData& data,
                                                 const num::Partition& partition, const ParamVec& init);

}  // namespace fedsa::sim
