#pragma once

#include <iosfwd>

#include "fedsa/attack/sliding_mode.hpp"

namespace fedsa::cli {

// Closed-loop run of the controller on the scalar plant w_{t+1} = w'_t
// (identity aggregator, w_0 = 0, reference e0) over t in [0, horizon];
// returns the RMS gap between e_t and (e0 + C/k) exp(-k t) - C/k.
double ode_tracking_rms(double k, double C, double e0, double dt, double horizon, double control_gain,
                        attack::Discretization disc);

// Self-contained numerical checks: the controller against the closed-form
// error ODE on the scalar toy plant, and every aggregator against
// brute-force or bound oracles on random small instances. Prints one line
// per suite; returns 0 iff all pass.
int oracle_check(std::ostream& out);

}  // namespace fedsa::cli
