#pragma once

#include <optional>
#include <string>

#include "empilab/mdp.hpp"

namespace empilab {

/// Expected shaped TD-residual delta_f(s,a,s') = R(s,a,s') + gamma f(s') - f(s),
/// reduced two ways:
///   per_state(s) = E_{a~pi', s'~P}[delta_f | s]      (state profile under pi')
///   eps          = max_s |per_state(s)|               (state max)
///   eps_sa       = max_{s,a} |E_{s'~P}[delta_f]|      (state-action max, policy-free)
/// eps <= eps_sa always: the state profile averages the (s,a) table over pi'.
struct TdResidualProfile {
    Vector per_state;
    double eps;
    double eps_sa;
};

/// Per-state divergences between two policies, averaged under the OLD
/// policy's discounted visitation.
///
/// kl_avg is E_{s~d}[D_KL(pi || pi')[s]] with the old policy first; the
/// direction matters and is easy to flip silently, hence the explicit
/// old-first convention in the field name below. When pi' lacks support
/// somewhere pi has mass, kl_avg is +inf and kl_support_ok is false
/// (reported, not thrown).
struct DivergenceProfile {
    Vector tv_per_state;  ///< D_TV(pi'||pi)[s] = (1/2) sum_a |pi'(a|s) - pi(a|s)|
    double tv_avg;        ///< E_{s~d}[D_TV(pi'||pi)[s]]
    double tv_max;        ///< max_s D_TV(pi'||pi)[s]
    double kl_avg;        ///< E_{s~d}[D_KL(pi_old || pi_new)[s]]
    bool kl_support_ok;
};

/// An advantage table a_hat(s,a) together with its per-state error
/// c(s) = max_a |A(s,a) - a_hat(s,a)| against the true advantage.
struct AdvantageEstimate {
    Matrix a_hat;
    Vector c_per_state;
};

/// The implemented policy-improvement lower bounds. All bound
/// J(pi') - J(pi) from below and are tight at pi' = pi.
enum class BoundVariant {
    /// (L - 2 eps_f D_TV(d'||d)) / (1-gamma): surrogate penalized by the
    /// exact visitation shift. Tightest of the family; needs d' to evaluate.
    ExactVisitationTv,
    /// (L - (2 gamma eps_f/(1-gamma)) E_d[D_TV(pi'||pi)]) / (1-gamma):
    /// the visitation shift replaced by the average policy divergence.
    AvgPolicyTv,
    /// The f = V specialization of AvgPolicyTv with a per-state penalty:
    /// E_{d,pi'}[A(s,a) - (2 gamma eps/(1-gamma)) D_TV[s]] / (1-gamma).
    AdvantageForm,
    /// AdvantageForm with an arbitrary advantage estimator; each state's
    /// penalty is inflated by twice the estimator error c(s).
    EstimatorAware,
    /// AdvantageForm with E_d[D_TV] bounded through Pinsker + Jensen by
    /// sqrt(kl_avg / 2).
    KlPinsker,
};

std::string to_string(BoundVariant variant);

/// Intermediate quantities behind a BoundReport's rhs.
struct BoundTerms {
    double surrogate_value;      ///< L (ratio-form surrogate or pi'-advantage term)
    double epsilon;              ///< the eps that scales the penalty
    double divergence;           ///< the divergence the penalty multiplies
    double penalty_coefficient;  ///< coefficient on the divergence (max over states
                                 ///< for the per-state EstimatorAware penalty)
};

/// Both sides of one improvement bound: rhs <= true_improvement always.
/// The divergence fields are reported for every variant regardless of which
/// one enters the rhs.
struct BoundReport {
    double true_improvement;  ///< J(pi') - J(pi), exact
    double rhs;
    BoundVariant variant;
    BoundTerms terms;
    double tv_avg;
    double tv_max;
    double kl_avg;
};

/// Test hook: scales the divergence penalty. Anything other than 1 breaks
/// bound validity on purpose (used to prove violation detection fires).
struct BoundOptions {
    double penalty_scale = 1.0;
};

/// E_{s'~P}[R(s,a,s') + gamma f(s') - f(s)] as an S x A table.
Matrix expected_residual_table(const Mdp& mdp, const ShapingFunction& f);

/// max_{s,a} of |expected_residual_table|; policy-free.
double max_abs_expected_residual(const Mdp& mdp, const ShapingFunction& f);

TdResidualProfile td_residual_profile(const Mdp& mdp, const ShapingFunction& f,
                                      const TabularPolicy& new_policy);

/// Ratio-form surrogate
///   L = E_{s~d, a~pi, s'~P}[(pi'(a|s)/pi(a|s) - 1) (R + gamma f(s') - f(s))].
/// Zero-probability actions of pi contribute 0 when pi' also has no mass
/// there; pi(a|s) = 0 with pi'(a|s) > 0 throws SupportViolation.
double surrogate(const Mdp& mdp, const TabularPolicy& old_policy,
                 const ShapingFunction& f, const TabularPolicy& new_policy);

DivergenceProfile divergence_profile(const Mdp& mdp, const TabularPolicy& old_policy,
                                     const TabularPolicy& new_policy);

/// ||d' - d||_1 (two exact visitation solves) against its policy-divergence
/// bound (2 gamma/(1-gamma)) tv_avg; lhs <= rhs always.
struct VisitationShift {
    double lhs;
    double rhs;
};
VisitationShift visitation_shift_bound(const Mdp& mdp, const TabularPolicy& old_policy,
                                       const TabularPolicy& new_policy);

/// Estimate whose table IS the true advantage (c identically zero).
AdvantageEstimate exact_advantage_estimate(const Mdp& mdp, const TabularPolicy& policy);

/// Wraps an arbitrary table, computing c(s) against the true advantage.
AdvantageEstimate make_advantage_estimate(const Mdp& mdp, const TabularPolicy& policy,
                                          Matrix a_hat);

/// Evaluates one bound variant exactly, returning both sides and every
/// intermediate term. The shaping function is used by ExactVisitationTv and
/// AvgPolicyTv only; the advantage-based variants derive their own f = V
/// internally and ignore the argument. EstimatorAware requires `estimate`.
BoundReport improvement_bound(const Mdp& mdp, const TabularPolicy& old_policy,
                              const TabularPolicy& new_policy, const ShapingFunction& f,
                              BoundVariant variant,
                              const std::optional<AdvantageEstimate>& estimate = {},
                              const BoundOptions& options = {});

/// Worst-case per-step change -sqrt(2 delta) gamma eps / (1-gamma)^2 for a
/// TRPO update constrained to average KL <= delta. Recomputes the average
/// KL and throws TrustRegionViolation if the constraint does not hold.
/// The guarantee covers trust-region UPDATES: new policies whose expected
/// advantage under the old visitation is nonnegative (the old policy is
/// feasible at objective 0, so any maximizer qualifies). An arbitrary
/// policy inside the KL ball can fall below this bound.
double trpo_worst_case(const Mdp& mdp, const TabularPolicy& old_policy,
                       const TabularPolicy& new_policy, double delta);

/// Flat CSV serialization of a BoundReport.
std::string bound_csv_header();
std::string bound_csv_row(const BoundReport& report);

}  // namespace empilab
