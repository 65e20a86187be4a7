#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "empilab/bounds.hpp"
#include "empilab/mdp.hpp"

namespace empilab {

/// How the per-iteration shaping function / advantage table is chosen.
enum class ShapingMode {
    ExactValue,  ///< f_i = V^{pi_i}, recomputed each iteration
    Supplied,    ///< a caller-provided f, fixed across iterations
    Estimated,   ///< an advantage estimate from a caller-provided source
};

/// Shape of the divergence penalty in estimated mode. Exact mode always
/// uses the single policy-free coefficient.
enum class PenaltyMode {
    UniformC,   ///< one coefficient, max over states (more conservative)
    PerStateC,  ///< per-state 2(c(s) + gamma eps/(1-gamma))
};

struct EmpiConfig {
    int max_iters = 50;
    double stop_tol = 0.0;  ///< stop when an iteration improves J by at most this
    ShapingMode shaping_mode = ShapingMode::ExactValue;
    PenaltyMode penalty_mode = PenaltyMode::PerStateC;
    double floor = 1e-6;  ///< minimum action probability eta, 0 < eta < 1/|A|
};

/// One iteration's certificate. objective_value is the penalized objective
/// at the accepted policy and is never negative (the current policy is
/// feasible with objective 0); j_after >= j_before - 1e-9 always.
struct IterationRecord {
    int iter = 0;
    double objective_value = 0.0;
    double j_before = 0.0;
    double j_after = 0.0;
    Vector penalty_per_state;  ///< constant vector in exact mode
    double tv_avg = 0.0;
    bool improved = false;
};

struct EmpiRun {
    std::vector<IterationRecord> records;
    TabularPolicy final_policy;
};

/// Source of advantage estimates for Estimated runs; called once per
/// iteration with the current policy.
using EstimatorFn =
    std::function<AdvantageEstimate(const Mdp&, const TabularPolicy&, int iter)>;

/// Policy-free penalty coefficient C = 2 gamma eps / (1 - gamma) with
/// eps = max_{s,a} |E_{s'}[R + gamma f(s') - f(s)]|.
double penalty_coefficient(const Mdp& mdp, const ShapingFunction& f);

/// Exact maximizer of the state-decomposed objective
///   max_{p on the simplex}  sum_a p(a) adv(a) - (c/2) sum_a |p(a) - policy_row(a)|.
/// All mass of actions whose gap to the best action exceeds c moves to the
/// best action (lowest index on ties); actions within c keep their mass.
Vector per_state_step(const Vector& advantage_row, const Vector& policy_row, double c);

/// One exact-mode iteration with shaping function f: per-state solve under
/// the uniform coefficient, probability floor, and fallback to the current
/// policy if flooring pushed the penalized objective negative.
std::pair<TabularPolicy, IterationRecord> empi_iteration(const Mdp& mdp,
                                                         const TabularPolicy& current,
                                                         const ShapingFunction& f,
                                                         const EmpiConfig& config);

/// One estimated-mode iteration: the per-state tables come from `estimate`
/// and each state's coefficient is inflated by twice its estimator error.
/// Monotonicity is still certified against the exact return.
std::pair<TabularPolicy, IterationRecord> empi_iteration_estimated(
    const Mdp& mdp, const TabularPolicy& current, const AdvantageEstimate& estimate,
    const EmpiConfig& config);

/// Runs up to config.max_iters iterations, stopping once an iteration's
/// exact improvement is <= config.stop_tol. `f` is required in Supplied
/// mode, `estimator` in Estimated mode.
EmpiRun run_empi(const Mdp& mdp, const TabularPolicy& initial, const EmpiConfig& config,
                 const std::optional<ShapingFunction>& f = {},
                 const EstimatorFn& estimator = {});

/// CSV serialization, one row per iteration.
std::string iteration_csv_header();
std::string iteration_csv_row(const IterationRecord& record);

}  // namespace empilab
