#include "fedsa/sim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fedsa/errors.hpp"

namespace fedsa::sim {

namespace {

std::filesystem::path mnist_dir(const DatasetSpec& spec) {
    if (!spec.mnist_dir.empty()) return spec.mnist_dir;
    if (const char* root = std::getenv("FEDSA_DATA_ROOT"); root != nullptr && *root != '\0') {
        return std::filesystem::path(root) / "mnist";
    }
    return std::filesystem::path("data") / "mnist";
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index owns its
// output slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::string library_key(const SimConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    const auto& d = cfg.dataset;
    os << "v1 ds=" << (d.kind == DatasetKind::Mnist ? "mnist:" + mnist_dir(d).string() : std::string("synthetic"))
       << " tl=" << d.train_limit << " el=" << d.test_limit << " nc=" << d.n_classes << " nf=" << d.n_features
       << " ntr=" << d.n_train << " nte=" << d.n_test << " sep=" << d.separation << " hidden=";
    for (auto h : d.hidden) os << h << ',';
    os << " part=" << (cfg.partition.kind == PartitionKind::Iid ? "iid" : "dirichlet") << ':' << cfg.partition.alpha
       << " N=" << cfg.clients << " rate=" << cfg.sampling_rate << " lr=" << cfg.lr << " bs=" << cfg.batch_size
       << " ep=" << cfg.local_epochs << " seed=" << cfg.seed << " init=" << cfg.init_half_width
       << " shadow=" << cfg.attack.shadow_rounds;
    return os.str();
}

std::shared_ptr<const attack::ReferenceLibrary> cached_library(const SimConfig& cfg, const SimData& data,
                                                               const num::Partition& partition,
                                                               const ParamVec& init) {
    const std::string key = library_key(cfg);
    if (!cfg.attack.reference_cache.empty()) {
        const std::filesystem::path dir = cfg.attack.reference_cache;
        std::ifstream kin(dir / "key.txt");
        std::string stored;
        if (kin && std::getline(kin, stored) && stored == key) {
            return std::make_shared<const attack::ReferenceLibrary>(attack::ReferenceLibrary::load(dir));
        }
    }
    auto lib = std::make_shared<const attack::ReferenceLibrary>(build_reference_library(cfg, data, partition, init));
    if (!cfg.attack.reference_cache.empty()) {
        const std::filesystem::path dir = cfg.attack.reference_cache;
        lib->save(dir);
        std::ofstream kout(dir / "key.txt", std::ios::trunc);
        kout << key << '\n';
        if (!kout) throw ConfigError("cannot write reference cache key under " + dir.string());
    }
    return lib;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::None: return "none";
        case AttackKind::FedSa: return "fedsa";
        case AttackKind::Lie: return "lie";
        case AttackKind::MinMax: return "minmax";
        case AttackKind::MinSum: return "minsum";
    }
    return "?";
}

AttackKind parse_attack(std::string_view name) {
    for (auto k : {AttackKind::None, AttackKind::FedSa, AttackKind::Lie, AttackKind::MinMax, AttackKind::MinSum}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown attack '" + std::string(name) + "'");
}

void SimConfig::validate() const {
    auto fail = [this](const std::string& key, const std::string& why) {
        throw ConfigError("experiment '" + id + "': " + key + " " + why);
    };
    if (clients == 0) fail("clients", "must be >= 1");
    if (malicious >= clients) fail("malicious", "must be < clients");
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) fail("sampling_rate", "must lie in (0, 1]");
    if (sampling_rate * static_cast<double>(clients) < 1.0 - 1e-9) fail("sampling_rate", "must select at least one client");
    if (rounds < 1) fail("rounds", "must be >= 1");
    if (!(lr > 0.0)) fail("lr", "must be > 0");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (local_epochs < 1) fail("local_epochs", "must be >= 1");
    if (!(target_accuracy > 0.0 && target_accuracy <= 100.0)) fail("target_accuracy", "must lie in (0, 100]");
    if (threads < 1) fail("threads", "must be >= 1");
    if (!(init_half_width >= 0.0)) fail("init_half_width", "must be >= 0");
    if (partition.kind == PartitionKind::Dirichlet && !(partition.alpha > 0.0)) fail("partition.alpha", "must be > 0");
    if (dataset.kind == DatasetKind::Synthetic) {
        if (dataset.n_classes < 2) fail("dataset.n_classes", "must be >= 2");
        if (dataset.n_features < 1) fail("dataset.n_features", "must be >= 1");
        if (dataset.n_train < 1 || dataset.n_test < 1) fail("dataset.n_train/n_test", "must be >= 1");
    }
    for (auto h : dataset.hidden) {
        if (h == 0) fail("dataset.hidden", "widths must be >= 1");
    }
    if (agr.cc_iters < 1) fail("agr.cc_iters", "must be >= 1");
    if (agr.dnc_iters < 1) fail("agr.dnc_iters", "must be >= 1");
    if (!(agr.norm_bound_tau > 0.0)) fail("agr.norm_bound_tau", "must be > 0");
    if (!(agr.cc_tau > 0.0)) fail("agr.cc_tau", "must be > 0");
    if (agr.fltrust_root_samples < 1) fail("agr.fltrust_root_samples", "must be >= 1");
    if (attack.kind == AttackKind::FedSa) {
        const auto& sp = attack.sliding;
        if (!(sp.k > 0.0)) fail("attack.k", "must be > 0");
        if (!(sp.control_gain > 0.0)) fail("attack.control_gain", "must be > 0");
        if (!(sp.dt > 0.0)) fail("attack.dt", "must be > 0");
        if (attack.shadow_rounds < 1) fail("attack.shadow_rounds", "must be >= 1");
        if (attack.switch_round.has_value() != attack.switch_target.has_value()) {
            fail("attack.switch_round", "and attack.switch_target must be given together");
        }
        if (attack.switch_target && !(*attack.switch_target > 0.0 && *attack.switch_target <= 100.0)) {
            fail("attack.switch_target", "must lie in (0, 100]");
        }
    }
}

SimData load_data(const SimConfig& cfg) {
    SimData out;
    if (cfg.dataset.kind == DatasetKind::Mnist) {
        const auto dir = mnist_dir(cfg.dataset);
        if (!std::filesystem::is_directory(dir)) {
            throw ConfigError("mnist directory not found: " + dir.string() + " (set FEDSA_DATA_ROOT)");
        }
        out.train = std::make_shared<const num::Dataset>(num::load_mnist_idx(
            dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", cfg.dataset.train_limit));
        out.test = std::make_shared<const num::Dataset>(num::load_mnist_idx(
            dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", cfg.dataset.test_limit));
        return out;
    }
    const auto& d = cfg.dataset;
    RngStream rng(cfg.seed, stream::kDataset);
    const auto all = num::gen_synthetic(d.n_classes, d.n_features, d.n_train + d.n_test, d.separation, rng);
    std::vector<std::size_t> tr(static_cast<std::size_t>(d.n_train)), te(static_cast<std::size_t>(d.n_test));
    for (std::size_t i = 0; i < tr.size(); ++i) tr[i] = i;
    for (std::size_t i = 0; i < te.size(); ++i) te[i] = tr.size() + i;
    out.train = std::make_shared<const num::Dataset>(all.subset(tr));
    out.test = std::make_shared<const num::Dataset>(all.subset(te));
    return out;
}

std::vector<std::size_t> model_dims(const SimConfig& cfg, const num::Dataset& train) {
    std::vector<std::size_t> dims{train.n_features()};
    dims.insert(dims.end(), cfg.dataset.hidden.begin(), cfg.dataset.hidden.end());
    dims.push_back(static_cast<std::size_t>(train.n_classes));
    return dims;
}

struct Simulator::Impl {
    SimConfig cfg;
    SimData data;
    num::Partition partition;
    std::vector<std::size_t> dims;
    ParamVec global;
    int round = 0;

    std::vector<RngStream> client_rng;
    std::vector<ParamVec> prev_honest;                 // last honest model per client (w_0 before any)
    std::vector<std::optional<ParamVec>> static_model;  // BenignMode::Static
    RngStream sampling_rng;
    RngStream attack_rng;
    RngStream server_rng;
    std::vector<std::size_t> root_shard;
    std::optional<ParamVec> prev_update;  // last aggregated update, CC start point

    std::shared_ptr<const attack::ReferenceLibrary> library;
    std::optional<attack::FedSaController> controller;
    double target = 0.0;  // percent
    std::optional<double> reference_accuracy;
    std::vector<std::string> warnings;

    Impl(SimConfig c, SimData d, std::shared_ptr<const attack::ReferenceLibrary> lib,
         std::optional<num::Partition> part, std::optional<ParamVec> init)
        : cfg(std::move(c)),
          data(std::move(d)),
          sampling_rng(cfg.seed, stream::kSampling),
          attack_rng(cfg.seed, stream::kAttack),
          server_rng(cfg.seed, stream::kServer),
          library(std::move(lib)),
          target(cfg.target_accuracy) {
        cfg.validate();
        if (!data.train || !data.test) throw InvalidInput("Simulator: missing dataset");
        dims = model_dims(cfg, *data.train);

        if (part) {
            if (part->clients() != cfg.clients || !part->valid_for(data.train->size())) {
                throw InvalidInput("Simulator: supplied partition does not fit the config");
            }
            partition = std::move(*part);
        } else {
            RngStream prng(cfg.seed, stream::kPartition);
            partition = cfg.partition.kind == PartitionKind::Iid
                            ? num::iid_partition(*data.train, cfg.clients, prng)
                            : num::dirichlet_partition(*data.train, cfg.clients, cfg.partition.alpha, prng);
        }

        if (init) {
            if (init->size() != param_count(dims)) throw InvalidInput("Simulator: initial model has the wrong size");
            global = std::move(*init);
        } else {
            RngStream irng(cfg.seed, stream::kInit);
            global = num::uniform_init(dims, cfg.init_half_width, irng).params;
        }

        for (std::size_t i = 0; i < cfg.clients; ++i) client_rng.emplace_back(cfg.seed, i);
        prev_honest.assign(cfg.clients, global);
        static_model.assign(cfg.clients, std::nullopt);

        if (cfg.agr.kind == agr::AggregatorKind::FlTrust) {
            const std::size_t n = data.train->size();
            std::vector<std::size_t> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = i;
            server_rng.shuffle(std::span<std::size_t>(ids));
            ids.resize(std::min(cfg.agr.fltrust_root_samples, n));
            root_shard = std::move(ids);
        }

        if (cfg.attack.kind == AttackKind::FedSa && cfg.malicious > 0) setup_controller();
    }

    static std::size_t param_count(const std::vector<std::size_t>& d) { return num::param_count(d); }

    void setup_controller() {
        if (!library) library = cached_library(cfg, data, partition, global);
        if (library->checkpoints.empty()) throw ConfigError("experiment '" + cfg.id + "': empty reference library");
        const double ref_pct = cfg.attack.reference_accuracy.value_or(cfg.target_accuracy);
        const auto& ref = library->checkpoints[library->closest(ref_pct / 100.0)];
        reference_accuracy = ref.accuracy * 100.0;
        if (std::abs(ref.accuracy * 100.0 - ref_pct) > 2.0) {
            warnings.push_back("reference checkpoint " + ref.id + " has accuracy " +
                               std::to_string(ref.accuracy * 100.0) + "%, requested " + std::to_string(ref_pct) + "%");
        }
        auto cal = calibrate(cfg.target_accuracy, ref.params);
        const ParamVec C1(ref.params.size(), cfg.attack.surface_init);
        controller.emplace(cfg.attack.sliding, ref.params, std::move(cal), C1);
    }

    ParamVec calibrate(double target_pct, const ParamVec& w_ref) {
        auto cal = attack::calibrate_C(*library, w_ref, target_pct / 100.0, cfg.attack.sliding.k);
        if (cal.warning) warnings.push_back(*cal.warning);
        return std::move(cal.C);
    }

    bool is_malicious(std::size_t client) const { return client >= cfg.clients - cfg.malicious; }

    bool needs_proxies() const {
        switch (cfg.attack.kind) {
            case AttackKind::None: return true;  // malicious clients behave honestly
            case AttackKind::FedSa: return cfg.attack.sliding.theta_mode == attack::ThetaMode::Proxy;
            default: return true;
        }
    }

    num::TrainOptions train_options() const { return {cfg.local_epochs, cfg.batch_size, cfg.lr}; }

    ParamVec honest_model(std::size_t client) {
        if (cfg.benign_mode == BenignMode::Static && static_model[client]) return *static_model[client];
        const num::MlpModel start(dims, global);
        auto trained = num::local_train(start, *data.train, partition.assignments[client], train_options(),
                                        client_rng[client]);
        if (cfg.benign_mode == BenignMode::Static) static_model[client] = trained.params;
        return std::move(trained.params);
    }

    RoundRecord step() {
        const auto t0 = std::chrono::steady_clock::now();
        RoundRecord rec;
        rec.round = round;

        const auto sampled = sample_clients(cfg.clients, cfg.sampling_rate, sampling_rng);
        std::vector<std::size_t> benign, malicious;
        for (auto c : sampled) (is_malicious(c) ? malicious : benign).push_back(c);
        rec.malicious_participants = static_cast<int>(malicious.size());

        std::vector<std::size_t> jobs = benign;
        if (!malicious.empty() && needs_proxies()) jobs.insert(jobs.end(), malicious.begin(), malicious.end());
        std::vector<ParamVec> trained(jobs.size());
        parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) { trained[i] = honest_model(jobs[i]); });

        std::vector<std::optional<ParamVec>> honest(cfg.clients);
        for (std::size_t i = 0; i < jobs.size(); ++i) honest[jobs[i]] = std::move(trained[i]);

        auto velocity = [&](std::size_t c) {
            ParamVec v = sub(*honest[c], prev_honest[c]);
            for (auto& x : v) x /= cfg.attack.sliding.dt;
            return v;
        };

        // Malicious submissions, keyed by client id.
        std::vector<std::optional<ParamVec>> submission(cfg.clients);
        for (auto c : benign) submission[c] = honest[c];
        if (!malicious.empty()) {
            std::vector<ParamVec> crafted;
            std::vector<ParamVec> proxies;
            for (auto c : malicious) {
                if (honest[c]) proxies.push_back(*honest[c]);
            }
            switch (cfg.attack.kind) {
                case AttackKind::None: crafted = proxies; break;
                case AttackKind::FedSa: {
                    attack::BenignInfo info;
                    info.n_total = sampled.size();
                    info.n_malicious = malicious.size();
                    const auto mode = cfg.attack.sliding.theta_mode;
                    if (mode == attack::ThetaMode::Omniscient) {
                        info.omniscient_access = true;
                        for (auto c : benign) info.velocities.push_back(velocity(c));
                    } else if (mode == attack::ThetaMode::Proxy) {
                        for (auto c : malicious) info.velocities.push_back(velocity(c));
                    }
                    attack::FedSaController::Step st;
                    try {
                        st = controller->act(global, info, attack_rng);
                    } catch (const ControllerFault& e) {
                        throw ControllerFault("round " + std::to_string(round) + ": " + e.what());
                    }
                    rec.err_norm = norm2(st.e);
                    rec.surface_norm = norm2(st.s);
                    rec.surface_inf = norm_inf(st.s);
                    ParamVec off = st.e;
                    const auto& C = controller->state().C;
                    for (std::size_t j = 0; j < off.size(); ++j) off[j] += C[j] / cfg.attack.sliding.k;
                    rec.offset_err_norm = norm2(off);
                    crafted = std::move(st.submissions);
                    break;
                }
                case AttackKind::Lie: {
                    if (proxies.size() < 2) {
                        crafted = proxies;
                        break;
                    }
                    const double z = cfg.attack.lie_z ? *cfg.attack.lie_z : attack::lie_z(sampled.size(), malicious.size());
                    crafted.assign(malicious.size(), attack::lie_attack(proxies, z));
                    break;
                }
                case AttackKind::MinMax:
                case AttackKind::MinSum: {
                    if (proxies.size() < 2) {
                        crafted = proxies;
                        break;
                    }
                    auto res = cfg.attack.kind == AttackKind::MinMax
                                   ? attack::min_max_attack(proxies, cfg.attack.perturb)
                                   : attack::min_sum_attack(proxies, cfg.attack.perturb);
                    crafted.assign(malicious.size(), std::move(res.model));
                    break;
                }
            }
            for (std::size_t i = 0; i < malicious.size(); ++i) submission[malicious[i]] = std::move(crafted[i]);
        } else if (controller) {
            controller->skip();
        }

        for (auto c : jobs) prev_honest[c] = *honest[c];

        agr::AggregationInput in;
        for (auto c : sampled) in.client_models.push_back(std::move(*submission[c]));
        in.assumed_malicious = cfg.agr.assumed_malicious.value_or(cfg.malicious);
        in.global_model = global;
        in.norm_bound_tau = cfg.agr.norm_bound_tau;
        in.cc_radius_tau = cfg.agr.cc_tau;
        in.cc_iters = cfg.agr.cc_iters;
        in.cc_start = prev_update;
        in.dnc_subsample_dim = cfg.agr.dnc_subsample_dim;
        in.dnc_filter_frac = cfg.agr.dnc_filter_frac;
        in.dnc_iters = cfg.agr.dnc_iters;
        in.dnc_seed = splitmix64(cfg.seed ^ static_cast<std::uint64_t>(round));
        in.mkrum_select = cfg.agr.mkrum_select;
        in.bulyan_strict = cfg.agr.bulyan_strict;
        if (cfg.agr.kind == agr::AggregatorKind::FlTrust) {
            const num::MlpModel start(dims, global);
            auto root = num::local_train(start, *data.train, root_shard, train_options(), server_rng);
            in.server_root_update = sub(root.params, global);
        }

        auto outcome = agr::aggregate(cfg.agr.kind, in);
        for (auto& w : outcome.warnings) warnings.push_back("round " + std::to_string(round) + ": " + w);
        if (outcome.selected_indices) {
            rec.selected_total = static_cast<int>(outcome.selected_indices->size());
            rec.selected_malicious = 0;
            for (auto idx : *outcome.selected_indices) {
                if (is_malicious(sampled[idx])) ++rec.selected_malicious;
            }
        }

        prev_update = sub(outcome.aggregate, global);
        global = std::move(outcome.aggregate);

        rec.global_accuracy = num::evaluate_accuracy(num::MlpModel(dims, global), *data.test);
        rec.delta = metric_delta(rec.global_accuracy * 100.0, target);
        rec.wallclock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        ++round;
        return rec;
    }
};

Simulator::Simulator(SimConfig cfg) : Simulator(cfg, load_data(cfg)) {}

Simulator::Simulator(SimConfig cfg, SimData data, std::shared_ptr<const attack::ReferenceLibrary> library,
                     std::optional<num::Partition> partition, std::optional<ParamVec> init)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(data), std::move(library), std::move(partition),
                                   std::move(init))) {}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

RoundRecord Simulator::run_round() {
    const auto& a = impl_->cfg.attack;
    if (a.switch_round && impl_->round == *a.switch_round) set_target(*a.switch_target);
    return impl_->step();
}

ExperimentResult Simulator::run() {
    ExperimentResult res;
    res.config = impl_->cfg;
    res.seed = impl_->cfg.seed;
    while (impl_->round < impl_->cfg.rounds) res.records.push_back(run_round());
    res.target_accuracy = impl_->target;
    res.final_accuracy = res.records.back().global_accuracy * 100.0;
    res.final_delta = res.records.back().delta;
    res.reference_checkpoint_accuracy = impl_->reference_accuracy;
    res.warnings = impl_->warnings;
    return res;
}

void Simulator::set_target(double target_percent) {
    if (!(target_percent > 0.0 && target_percent <= 100.0)) throw InvalidInput("set_target: target must lie in (0, 100]");
    impl_->target = target_percent;
    if (impl_->controller) {
        impl_->controller->set_offset(impl_->calibrate(target_percent, impl_->controller->reference()));
    }
}

int Simulator::round() const noexcept { return impl_->round; }
const ParamVec& Simulator::global() const noexcept { return impl_->global; }
const SimConfig& Simulator::config() const noexcept { return impl_->cfg; }
const num::Partition& Simulator::partition() const noexcept { return impl_->partition; }
const attack::FedSaController* Simulator::controller() const noexcept {
    return impl_->controller ? &*impl_->controller : nullptr;
}
std::shared_ptr<const attack::ReferenceLibrary> Simulator::library() const noexcept { return impl_->library; }
const std::vector<std::string>& Simulator::warnings() const noexcept { return impl_->warnings; }

ExperimentResult run_experiment(const SimConfig& cfg) {
    cfg.validate();
    Simulator sim(cfg);
    return sim.run();
}

attack::ReferenceLibrary build_reference_library(const SimConfig& cfg, const SimData& data,
                                                 const num::Partition& partition, const ParamVec& init) {
    SimConfig shadow = cfg;
    shadow.id = cfg.id + "-shadow";
    shadow.seed = cfg.seed + 1;
    shadow.malicious = 0;
    shadow.attack = AttackSpec{};
    shadow.agr = AggregatorSpec{};
    shadow.benign_mode = BenignMode::Train;
    shadow.rounds = cfg.attack.shadow_rounds;
    shadow.attack.shadow_rounds = cfg.attack.shadow_rounds;
    shadow.attack.switch_round.reset();

    Simulator sim(shadow, data, nullptr, partition, init);
    attack::ReferenceLibrary lib;
    const num::MlpModel init_model(model_dims(cfg, *data.train), init);
    const double acc0 = num::evaluate_accuracy(init_model, *data.test);
    lib.checkpoints.push_back({"r0", init, acc0});
    double bucket = std::floor(acc0 * 100.0);
    for (int t = 0; t < shadow.rounds; ++t) {
        const auto rec = sim.run_round();
        const double b = std::floor(rec.global_accuracy * 100.0);
        if (b > bucket) {
            bucket = b;
            lib.checkpoints.push_back({"r" + std::to_string(t + 1), sim.global(), rec.global_accuracy});
        }
    }
    return lib;
}

}  // namespace fedsa::sim
