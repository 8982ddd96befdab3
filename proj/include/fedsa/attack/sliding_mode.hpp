#pragma once

// Sliding-mode poisoning controller. The global model w_t is treated as the
// plant output, the shared malicious model w' as the actuator (w' advances by
// dt * u each actuated round) and the controller drives
//
//     e_t = w_ref - w_t  ->  -C / k
//
// along the surface s_t = s_{t-1} + dt * (de_t + k e_t + C), s_0 = C1.
// Every vector operation is coordinate-wise; the aggregator Jacobian is
// approximated by its diagonal.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "fedsa/rng.hpp"
#include "fedsa/vec.hpp"

namespace fedsa::attack {

enum class JacobianMode { AnalyticFedAvg, FiniteDifference };
enum class ThetaMode { Omniscient, Proxy, Simplified };
// Euler applies k and C as written. ExactHold swaps k for the sampled gain
// (1 - exp(-k dt)) / dt and scales C alike, so that on the surface e follows
// the continuous solution exactly at the sample times.
enum class Discretization { Euler, ExactHold };

JacobianMode parse_jacobian_mode(std::string_view name);
ThetaMode parse_theta_mode(std::string_view name);
std::string_view to_string(JacobianMode mode);
std::string_view to_string(ThetaMode mode);
Discretization parse_discretization(std::string_view name);
std::string_view to_string(Discretization d);

struct SlidingParams {
    double k = 0.5;                // convergence-speed gain
    double control_gain = 0.01;    // reaching gain on sign(s)
    double dt = 1.0;               // one FL round per Euler step
    double eps_jac = 1e-6;         // denominator guard and clamp for Jacobian entries
    double boundary_layer = 0.0;   // > 0 replaces sign(s) with clamp(s / phi, -1, 1)
    double jitter = 0.0;           // per-client Gaussian noise added to submissions
    JacobianMode jacobian_mode = JacobianMode::AnalyticFedAvg;
    ThetaMode theta_mode = ThetaMode::Proxy;
    Discretization discretization = Discretization::Euler;
};

// A shared malicious submission paired with the aggregate it produced.
struct Actuation {
    ParamVec malicious;
    ParamVec aggregate;
};

struct SlidingState {
    SlidingParams params;
    ParamVec C;                // objective offset
    ParamVec C1;               // surface initial value
    ParamVec s;                // current surface value
    ParamVec prev_e;           // e_{t-1}
    bool has_prev_e = false;
    ParamVec prev_malicious;   // w'_{t-1}; empty until the first actuation
    std::optional<Actuation> before_last;
    std::optional<Actuation> last;

    static SlidingState init(const SlidingParams& params, ParamVec C, ParamVec C1);
};

ParamVec compute_error(std::span<const double> w_ref, std::span<const double> w_t);

// Advances the surface with the backward-difference derivative of e
// (de = 0 on the very first call) and stores e as prev_e.
ParamVec update_sliding_surface(SlidingState& state, std::span<const double> e_t);

// Per-coordinate dF/dw' for the shared malicious model. `fallback` is the
// FedAvg value m/N; it is used in analytic mode, before two actuations
// exist, and wherever the finite-difference quotient is unusable.
ParamVec estimate_jacobian(const SlidingState& state, double fallback);

struct BenignInfo {
    // Omniscient: true per-round velocities of the participating benign
    // clients. Proxy: velocities of the malicious clients' own honest models.
    std::vector<ParamVec> velocities;
    std::size_t n_total = 0;       // participating clients this round
    std::size_t n_malicious = 0;   // participating malicious clients
    bool omniscient_access = false;
};

ParamVec estimate_theta(const SlidingState& state, ThetaMode mode, const BenignInfo& info,
                        std::span<const double> jacobian);

// Coordinate-wise sign(s) or its boundary-layer saturation.
ParamVec switching_term(const SlidingParams& params, std::span<const double> s);

// u = jac^-1 (k e + gain * sign(s) - theta + C)
ParamVec control_law(const SlidingState& state, std::span<const double> e_t, std::span<const double> s_t,
                     std::span<const double> jacobian, std::span<const double> theta);

// u = jac^-1 (gain * sign(s))
ParamVec simplified_control_law(const SlidingState& state, std::span<const double> s_t,
                                std::span<const double> jacobian);

// w' <- w' + dt * u, replicated for `m` clients (plus optional jitter).
std::vector<ParamVec> apply_control(SlidingState& state, std::span<const double> u_t, std::size_t m,
                                    RngStream& rng);

// Round-level driver around SlidingState.
class FedSaController {
public:
    FedSaController(const SlidingParams& params, ParamVec reference, ParamVec C, ParamVec C1);

    struct Step {
        std::vector<ParamVec> submissions;
        ParamVec e;
        ParamVec s;
        ParamVec u;
        ParamVec jacobian;
        ParamVec theta;
    };

    // One actuated round: observes the broadcast global model, returns the
    // m_active malicious submissions. Throws ControllerFault on non-finite u.
    Step act(std::span<const double> global, const BenignInfo& info, RngStream& rng);

    // Round in which no malicious client participates: state is frozen and
    // the finite-difference history restarts.
    void skip();

    void set_offset(ParamVec C);
    const SlidingState& state() const noexcept { return state_; }
    const ParamVec& reference() const noexcept { return reference_; }

private:
    SlidingState state_;
    ParamVec reference_;
    bool pending_ = false;  // last round was actuated and its aggregate is not yet recorded
};

}  // namespace fedsa::attack
