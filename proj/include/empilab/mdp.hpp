#pragma once

#include <Eigen/Dense>
#include <vector>

#include "empilab/errors.hpp"

namespace empilab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerance for probability validation at construction time.
inline constexpr double kProbTol = 1e-12;

/// Finite MDP (S, A, R, P, mu) with discount gamma in [0, 1).
///
/// Transitions and rewards are stored as one S x S matrix per action:
/// transition(a)(s, s') = P(s'|s,a) and reward(a)(s, s') = R(s,a,s').
/// Every transition row is validated to be a probability distribution
/// (entries >= 0, row sum within kProbTol of 1), as is the start
/// distribution. Rewards are kept in full (s,a,s') form even when a source
/// model only depends on (s,a): expectations over s' need the full tensor.
///
/// Instances are immutable after construction; all operations on them are
/// pure functions and safe to call concurrently.
class Mdp {
  public:
    Mdp(std::vector<Matrix> transition, std::vector<Matrix> reward,
        Vector start_dist, double gamma);

    int num_states() const { return static_cast<int>(start_dist_.size()); }
    int num_actions() const { return static_cast<int>(transition_.size()); }
    double gamma() const { return gamma_; }
    const Vector& start_dist() const { return start_dist_; }

    double transition(int s, int a, int sp) const { return transition_[a](s, sp); }
    double reward(int s, int a, int sp) const { return reward_[a](s, sp); }

    /// P(.|., a) as an S x S row-stochastic matrix (row = source state).
    const Matrix& transition_for_action(int a) const { return transition_[a]; }
    const Matrix& reward_for_action(int a) const { return reward_[a]; }

    /// max |R(s,a,s')| over transitions with P(s'|s,a) > 0; the reward
    /// scale that enters truncation and worst-case penalty bounds.
    double max_abs_reward() const;

  private:
    std::vector<Matrix> transition_;
    std::vector<Matrix> reward_;
    Vector start_dist_;
    double gamma_;
};

/// Per-state action distribution pi(a|s); probs() is S x A with row s a
/// validated distribution over actions.
class TabularPolicy {
  public:
    explicit TabularPolicy(Matrix probs);

    static TabularPolicy uniform(int num_states, int num_actions);

    int num_states() const { return static_cast<int>(probs_.rows()); }
    int num_actions() const { return static_cast<int>(probs_.cols()); }
    const Matrix& probs() const { return probs_; }
    double prob(int s, int a) const { return probs_(s, a); }
    double min_prob() const { return probs_.minCoeff(); }

  private:
    Matrix probs_;
};

/// Discounted future state distribution d(s) = (1-gamma) sum_t gamma^t P(s_t = s).
struct Visitation {
    Vector dist;
};

/// V, Q, A and the discounted return J for a fixed (Mdp, policy) pair.
/// Produced by value_functions(); adv(s,a) = q(s,a) - v(s) by construction
/// and sum_a pi(a|s) adv(s,a) = 0 at every state.
struct ValueFunctions {
    Vector v;     ///< V(s)
    Matrix q;     ///< Q(s,a), S x A
    Matrix adv;   ///< A(s,a) = Q(s,a) - V(s)
    double ret;   ///< J = <mu, V>
};

/// Arbitrary state function f : S -> R used for reward shaping.
struct ShapingFunction {
    explicit ShapingFunction(Vector v);

    static ShapingFunction zero(int num_states) {
        return ShapingFunction(Vector::Zero(num_states));
    }

    Vector values;
};

/// Throws DimensionError unless the policy shape matches the MDP.
void check_shapes(const Mdp& mdp, const TabularPolicy& policy);
void check_shapes(const Mdp& mdp, const ShapingFunction& f);

/// State-to-state kernel under a policy: entry (s, s') is
/// sum_a pi(a|s) P(s'|s,a). Row-stochastic, row = source state.
Matrix build_transition_kernel(const Mdp& mdp, const TabularPolicy& policy);

/// Discounted visitation d = (1-gamma) (I - gamma K^T)^{-1} mu, solved with
/// a dense LU factorization (the system is nonsingular for gamma < 1).
/// For gamma = 0 this is mu exactly.
Visitation discounted_visitation(const Mdp& mdp, const TabularPolicy& policy);

/// Policy evaluation: V from the Bellman linear system, Q from the one-step
/// backup, A = Q - V, ret = <mu, V>.
ValueFunctions value_functions(const Mdp& mdp, const TabularPolicy& policy);

/// J(pi) evaluated through the visitation form
/// (1/(1-gamma)) E_{s~d, a~pi, s'~P}[R(s,a,s')].
double discounted_return(const Mdp& mdp, const TabularPolicy& policy);

/// J(pi) evaluated through the shaping identity
/// E_mu[f] + (1/(1-gamma)) E_{d,pi,P}[R + gamma f(s') - f(s)];
/// equal to discounted_return for every f.
double return_identity(const Mdp& mdp, const TabularPolicy& policy,
                       const ShapingFunction& f);

/// Defect of the visitation balance equation tested against f:
/// (1-gamma) E_mu[f] + E_{d,pi,P}[gamma f(s')] - E_d[f].
/// Identically zero up to solver round-off.
double visitation_balance_residual(const Mdp& mdp, const TabularPolicy& policy,
                                   const ShapingFunction& f);

/// Same MDP with rewards shaped to R(s,a,s') + gamma f(s') - f(s). Shifts
/// every policy's return by the policy-independent constant -E_mu[f].
Mdp shaped_mdp(const Mdp& mdp, const ShapingFunction& f);

}  // namespace empilab
