#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "empilab/bounds.hpp"
#include "empilab/mdp.hpp"
#include "empilab/rng.hpp"

namespace empilab {

/// A finite rollout (s_t, a_t, s_{t+1}, r_t), t = 0..horizon-1. Every
/// recorded transition has positive model probability; identical
/// (inputs, seed) reproduce the trajectory bit for bit.
struct Trajectory {
    std::vector<int> states;
    std::vector<int> actions;
    std::vector<int> next_states;
    std::vector<double> rewards;
    int horizon = 0;
    std::uint64_t seed = 0;
};

/// A Monte-Carlo estimate with its sampling and truncation error scales.
/// truncation_bound = gamma^H R_max / (1 - gamma) bounds the bias from
/// cutting the infinite sum at H.
struct SampleEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int n = 0;
    int horizon = 0;
    double truncation_bound = 0.0;
    std::uint64_t seed = 0;
};

/// Smallest H with gamma^H R_max / (1 - gamma) <= tol (1 when gamma = 0).
int default_horizon(const Mdp& mdp, double tol = 1e-3);

Trajectory sample_trajectory(const Mdp& mdp, const TabularPolicy& policy, int horizon,
                             std::uint64_t seed);

/// Average of n truncated discounted reward sums; trajectory i draws from
/// substream_seed(seed, i), so the estimate is reproducible regardless of
/// how trajectories are distributed over workers.
SampleEstimate mc_return(const Mdp& mdp, const TabularPolicy& policy, int n, int horizon,
                         std::uint64_t seed);

/// Monte-Carlo estimate of the penalized step objective in trajectory form:
///   E_{tau~pi}[ sum_t gamma^t ( (pi'(a_t|s_t)/pi(a_t|s_t)) a_hat(s_t,a_t)
///                               - penalty(s_t) D_TV(pi'||pi)[s_t] ) ].
/// The gamma^t sum absorbs the 1/(1-gamma) of the visitation expectation:
/// the exact comparator is sum_s d(s) [ <pi'(.|s), a_hat(s,.)> -
/// penalty(s) tv(s) ] / (1-gamma).
SampleEstimate mc_objective(const Mdp& mdp, const TabularPolicy& old_policy,
                            const TabularPolicy& new_policy,
                            const AdvantageEstimate& estimate, const Vector& penalty_per_state,
                            int n, int horizon, std::uint64_t seed);

/// Advantage estimate built from a perturbed value table
/// V_hat = V + u, u(s) ~ Uniform[-noise_scale, noise_scale]:
///   a_hat(s,a) = E_{s'}[R(s,a,s') + gamma V_hat(s')] - V_hat(s),
/// with c(s) computed exactly against the true advantage.
AdvantageEstimate corrupt_value_estimator(const Mdp& mdp, const TabularPolicy& policy,
                                          double noise_scale, std::uint64_t seed);

/// Conservative penalty scale when only samples are available: the range
/// bound 2 R_max / (1 - gamma) on any value-based advantage table.
double worst_case_epsilon(const Mdp& mdp);

/// Heuristic penalty scale: max |a_hat| over the (s,a) pairs the given
/// trajectories visited. Cheap but not a certified bound.
double heuristic_epsilon(const AdvantageEstimate& estimate,
                         const std::vector<Trajectory>& trajectories);

std::string sample_csv_header();
std::string sample_csv_row(const SampleEstimate& estimate);

}  // namespace empilab
