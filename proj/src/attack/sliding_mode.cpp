#include "fedsa/attack/sliding_mode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsa/errors.hpp"

namespace fedsa::attack {

JacobianMode parse_jacobian_mode(std::string_view name) {
    if (name == "analytic-fedavg") return JacobianMode::AnalyticFedAvg;
    if (name == "finite-difference") return JacobianMode::FiniteDifference;
    throw ConfigError("unknown jacobian mode '" + std::string(name) + "'");
}

ThetaMode parse_theta_mode(std::string_view name) {
    if (name == "omniscient") return ThetaMode::Omniscient;
    if (name == "proxy") return ThetaMode::Proxy;
    if (name == "simplified") return ThetaMode::Simplified;
    throw ConfigError("unknown theta mode '" + std::string(name) + "'");
}

Discretization parse_discretization(std::string_view name) {
    if (name == "euler") return Discretization::Euler;
    if (name == "exact-hold") return Discretization::ExactHold;
    throw ConfigError("unknown discretization '" + std::string(name) + "'");
}

std::string_view to_string(Discretization d) { return d == Discretization::Euler ? "euler" : "exact-hold"; }

std::string_view to_string(JacobianMode mode) {
    return mode == JacobianMode::AnalyticFedAvg ? "analytic-fedavg" : "finite-difference";
}

std::string_view to_string(ThetaMode mode) {
    switch (mode) {
        case ThetaMode::Omniscient: return "omniscient";
        case ThetaMode::Proxy: return "proxy";
        case ThetaMode::Simplified: return "simplified";
    }
    return "?";
}

SlidingState SlidingState::init(const SlidingParams& params, ParamVec C, ParamVec C1) {
    if (!(params.k > 0.0)) throw InvalidInput("sliding state: k must be > 0");
    if (!(params.control_gain > 0.0)) throw InvalidInput("sliding state: control_gain must be > 0");
    if (!(params.dt > 0.0)) throw InvalidInput("sliding state: dt must be > 0");
    if (!(params.eps_jac > 0.0)) throw InvalidInput("sliding state: eps_jac must be > 0");
    require_same_size(C.size(), C1.size(), "sliding state C/C1");
    SlidingState st;
    st.params = params;
    st.s = C1;
    st.C = std::move(C);
    st.C1 = std::move(C1);
    return st;
}

ParamVec compute_error(std::span<const double> w_ref, std::span<const double> w_t) {
    require_same_size(w_ref.size(), w_t.size(), "compute_error");
    return sub(w_ref, w_t);
}

ParamVec update_sliding_surface(SlidingState& state, std::span<const double> e_t) {
    require_same_size(e_t.size(), state.s.size(), "update_sliding_surface");
    const double dt = state.params.dt, k = state.params.k;
    for (std::size_t j = 0; j < e_t.size(); ++j) {
        const double de = state.has_prev_e ? (e_t[j] - state.prev_e[j]) / dt : 0.0;
        state.s[j] += dt * (de + k * e_t[j] + state.C[j]);
    }
    state.prev_e.assign(e_t.begin(), e_t.end());
    state.has_prev_e = true;
    return state.s;
}

ParamVec estimate_jacobian(const SlidingState& state, double fallback) {
    const std::size_t r = state.s.size();
    const double eps = state.params.eps_jac;
    ParamVec jac(r, fallback);
    if (state.params.jacobian_mode == JacobianMode::AnalyticFedAvg || !state.before_last || !state.last) {
        return jac;
    }
    const auto& a = *state.before_last;
    const auto& b = *state.last;
    for (std::size_t j = 0; j < r; ++j) {
        const double den = b.malicious[j] - a.malicious[j];
        if (std::abs(den) < eps) continue;
        const double q = (b.aggregate[j] - a.aggregate[j]) / den;
        if (!std::isfinite(q)) continue;
        const double mag = std::clamp(std::abs(q), eps, 1.0 / eps);
        jac[j] = q < 0.0 ? -mag : mag;
    }
    return jac;
}

ParamVec estimate_theta(const SlidingState& state, ThetaMode mode, const BenignInfo& info,
                        std::span<const double> jacobian) {
    const std::size_t r = state.s.size();
    require_same_size(jacobian.size(), r, "estimate_theta");
    ParamVec theta(r, 0.0);
    if (mode == ThetaMode::Simplified || info.velocities.empty()) return theta;
    if (info.n_malicious == 0) throw InvalidInput("estimate_theta: no participating malicious client");
    const double per_client = 1.0 / static_cast<double>(info.n_malicious);

    ParamVec vel_sum(r, 0.0);
    for (const auto& v : info.velocities) axpy(1.0, v, vel_sum);

    double scale = 0.0;
    if (mode == ThetaMode::Omniscient) {
        if (!info.omniscient_access) {
            throw ConfigError("omniscient theta requested but the simulator did not grant benign access");
        }
        scale = 1.0;
    } else {
        // Proxy: benign clients assumed to move like the attacker's own honest models.
        const double n_benign = static_cast<double>(info.n_total - info.n_malicious);
        scale = n_benign / static_cast<double>(info.velocities.size());
    }
    for (std::size_t j = 0; j < r; ++j) theta[j] = scale * per_client * jacobian[j] * vel_sum[j];
    return theta;
}

ParamVec switching_term(const SlidingParams& params, std::span<const double> s) {
    ParamVec out(s.size());
    const double phi = params.boundary_layer;
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = phi > 0.0 ? std::clamp(s[j] / phi, -1.0, 1.0) : signum(s[j]);
    return out;
}

ParamVec control_law(const SlidingState& state, std::span<const double> e_t, std::span<const double> s_t,
                     std::span<const double> jacobian, std::span<const double> theta) {
    const std::size_t r = e_t.size();
    require_same_size(s_t.size(), r, "control_law s");
    require_same_size(jacobian.size(), r, "control_law jacobian");
    require_same_size(theta.size(), r, "control_law theta");
    const auto sw = switching_term(state.params, s_t);
    const auto& p = state.params;
    const double k_eff = p.discretization == Discretization::ExactHold ? -std::expm1(-p.k * p.dt) / p.dt : p.k;
    const double c_scale = k_eff / p.k;
    ParamVec u(r);
    for (std::size_t j = 0; j < r; ++j) {
        u[j] = (k_eff * e_t[j] + p.control_gain * sw[j] - theta[j] + c_scale * state.C[j]) / jacobian[j];
    }
    return u;
}

ParamVec simplified_control_law(const SlidingState& state, std::span<const double> s_t,
                                std::span<const double> jacobian) {
    require_same_size(jacobian.size(), s_t.size(), "simplified_control_law");
    const auto sw = switching_term(state.params, s_t);
    ParamVec u(s_t.size());
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = state.params.control_gain * sw[j] / jacobian[j];
    return u;
}

std::vector<ParamVec> apply_control(SlidingState& state, std::span<const double> u_t, std::size_t m,
                                    RngStream& rng) {
    require_same_size(u_t.size(), state.prev_malicious.size(), "apply_control");
    axpy(state.params.dt, u_t, state.prev_malicious);
    std::vector<ParamVec> subs(m, state.prev_malicious);
    if (state.params.jitter > 0.0) {
        for (auto& sub : subs) {
            for (auto& v : sub) v += rng.normal(0.0, state.params.jitter);
        }
    }
    return subs;
}

FedSaController::FedSaController(const SlidingParams& params, ParamVec reference, ParamVec C, ParamVec C1)
    : state_(SlidingState::init(params, std::move(C), std::move(C1))), reference_(std::move(reference)) {
    require_same_size(reference_.size(), state_.s.size(), "FedSaController reference");
}

FedSaController::Step FedSaController::act(std::span<const double> global, const BenignInfo& info, RngStream& rng) {
    require_same_size(global.size(), reference_.size(), "FedSaController::act");
    if (info.n_malicious == 0 || info.n_total == 0) throw InvalidInput("FedSaController::act: no malicious participant");

    if (state_.prev_malicious.empty()) state_.prev_malicious.assign(global.begin(), global.end());
    if (pending_) {
        state_.before_last = std::move(state_.last);
        state_.last = Actuation{state_.prev_malicious, ParamVec(global.begin(), global.end())};
    }

    Step step;
    step.e = compute_error(reference_, global);
    step.s = update_sliding_surface(state_, step.e);
    const double fallback = static_cast<double>(info.n_malicious) / static_cast<double>(info.n_total);
    step.jacobian = estimate_jacobian(state_, fallback);
    step.theta = estimate_theta(state_, state_.params.theta_mode, info, step.jacobian);
    step.u = state_.params.theta_mode == ThetaMode::Simplified
                 ? simplified_control_law(state_, step.s, step.jacobian)
                 : control_law(state_, step.e, step.s, step.jacobian, step.theta);
    if (!all_finite(step.u)) throw ControllerFault("control input is not finite");
    step.submissions = apply_control(state_, step.u, info.n_malicious, rng);
    pending_ = true;
    return step;
}

void FedSaController::skip() {
    pending_ = false;
    state_.before_last.reset();
    state_.last.reset();
}

void FedSaController::set_offset(ParamVec C) {
    require_same_size(C.size(), state_.C.size(), "FedSaController::set_offset");
    state_.C = std::move(C);
}

}  // namespace fedsa::attack
