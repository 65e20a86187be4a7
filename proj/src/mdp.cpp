#include "empilab/mdp.hpp"

#include <cmath>
#include <string>

namespace empilab {

namespace {

void validate_distribution(const Vector& p, double tol, const std::string& what) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(p(i) >= 0.0)) {
            throw ValidationError(what + ": negative entry at index " +
                                  std::to_string(i) + " (" + std::to_string(p(i)) + ")");
        }
    }
    const double sum = p.sum();
    if (std::abs(sum - 1.0) > tol) {
        throw ValidationError(what + ": entries sum to " + std::to_string(sum) +
                              ", expected 1 within " + std::to_string(tol));
    }
}

}  // namespace

Mdp::Mdp(std::vector<Matrix> transition, std::vector<Matrix> reward,
         Vector start_dist, double gamma)
    : transition_(std::move(transition)),
      reward_(std::move(reward)),
      start_dist_(std::move(start_dist)),
      gamma_(gamma) {
    const auto n = start_dist_.size();
    if (n <= 0) throw ValidationError("Mdp: empty state space");
    if (transition_.empty()) throw ValidationError("Mdp: empty action space");
    if (reward_.size() != transition_.size()) {
        throw DimensionError("Mdp: reward tensor has " + std::to_string(reward_.size()) +
                             " action slices, transition has " + std::to_string(transition_.size()));
    }
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) {
        throw ValidationError("Mdp: gamma must lie in [0, 1), got " + std::to_string(gamma_));
    }
    for (std::size_t a = 0; a < transition_.size(); ++a) {
        if (transition_[a].rows() != n || transition_[a].cols() != n ||
            reward_[a].rows() != n || reward_[a].cols() != n) {
            throw DimensionError("Mdp: slice for action " + std::to_string(a) +
                                 " is not " + std::to_string(n) + "x" + std::to_string(n));
        }
        for (Eigen::Index s = 0; s < n; ++s) {
            for (Eigen::Index sp = 0; sp < n; ++sp) {
                const double p = transition_[a](s, sp);
                if (!(p >= 0.0)) {
                    throw ValidationError("Mdp: negative transition probability at (s=" +
                                          std::to_string(s) + ",a=" + std::to_string(a) +
                                          ",s'=" + std::to_string(sp) + ")");
                }
                if (!std::isfinite(reward_[a](s, sp))) {
                    throw ValidationError("Mdp: non-finite reward at (s=" + std::to_string(s) +
                                          ",a=" + std::to_string(a) + ",s'=" + std::to_string(sp) + ")");
                }
            }
            const double row_sum = transition_[a].row(s).sum();
            if (std::abs(row_sum - 1.0) > kProbTol) {
                throw ValidationError("Mdp: transition row (s=" + std::to_string(s) + ",a=" +
                                      std::to_string(a) + ") sums to " + std::to_string(row_sum));
            }
        }
    }
    validate_distribution(start_dist_, kProbTol, "Mdp: start distribution");
}

double Mdp::max_abs_reward() const {
    double m = 0.0;
    for (std::size_t a = 0; a < transition_.size(); ++a) {
        for (Eigen::Index s = 0; s < start_dist_.size(); ++s) {
            for (Eigen::Index sp = 0; sp < start_dist_.size(); ++sp) {
                if (transition_[a](s, sp) > 0.0) {
                    m = std::max(m, std::abs(reward_[a](s, sp)));
                }
            }
        }
    }
    return m;
}

TabularPolicy::TabularPolicy(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() <= 0 || probs_.cols() <= 0) {
        throw ValidationError("TabularPolicy: empty probability matrix");
    }
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
        validate_distribution(probs_.row(s).transpose(), kProbTol,
                              "TabularPolicy: row for state " + std::to_string(s));
    }
}

TabularPolicy TabularPolicy::uniform(int num_states, int num_actions) {
    return TabularPolicy(Matrix::Constant(num_states, num_actions, 1.0 / num_actions));
}

ShapingFunction::ShapingFunction(Vector v) : values(std::move(v)) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values(i))) {
            throw ValidationError("ShapingFunction: non-finite value at index " + std::to_string(i));
        }
    }
}

void check_shapes(const Mdp& mdp, const TabularPolicy& policy) {
    if (policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions()) {
        throw DimensionError("policy is " + std::to_string(policy.num_states()) + "x" +
                             std::to_string(policy.num_actions()) + ", MDP expects " +
                             std::to_string(mdp.num_states()) + "x" +
                             std::to_string(mdp.num_actions()));
    }
}

void check_shapes(const Mdp& mdp, const ShapingFunction& f) {
    if (f.values.size() != mdp.num_states()) {
        throw DimensionError("shaping function has " + std::to_string(f.values.size()) +
                             " entries, MDP has " + std::to_string(mdp.num_states()) + " states");
    }
}

Matrix build_transition_kernel(const Mdp& mdp, const TabularPolicy& policy) {
    check_shapes(mdp, policy);
    const int n = mdp.num_states();
    Matrix kernel = Matrix::Zero(n, n);
    for (int a = 0; a < mdp.num_actions(); ++a) {
        kernel.noalias() += policy.probs().col(a).asDiagonal() * mdp.transition_for_action(a);
    }
    return kernel;
}

Visitation discounted_visitation(const Mdp& mdp, const TabularPolicy& policy) {
    check_shapes(mdp, policy);
    const int n = mdp.num_states();
    const double gamma = mdp.gamma();
    if (gamma == 0.0) return Visitation{mdp.start_dist()};

    const Matrix kernel = build_transition_kernel(mdp, policy);
    // d = (1-gamma) mu + gamma K^T d, i.e. (I - gamma K^T) d = (1-gamma) mu.
    const Matrix system = Matrix::Identity(n, n) - gamma * kernel.transpose();
    Vector d = system.partialPivLu().solve((1.0 - gamma) * mdp.start_dist());

    // The solution is a distribution up to round-off; clamp solver noise.
    for (int s = 0; s < n; ++s) {
        if (d(s) < 0.0) {
            if (d(s) < -1e-10) {
                throw ValidationError("discounted_visitation: entry " + std::to_string(s) +
                                      " is " + std::to_string(d(s)));
            }
            d(s) = 0.0;
        }
    }
    if (std::abs(d.sum() - 1.0) > 1e-10) {
        throw ValidationError("discounted_visitation: mass " + std::to_string(d.sum()));
    }
    return Visitation{std::move(d)};
}

ValueFunctions value_functions(const Mdp& mdp, const TabularPolicy& policy) {
    check_shapes(mdp, policy);
    const int n = mdp.num_states();
    const int num_actions = mdp.num_actions();
    const double gamma = mdp.gamma();

    // Expected one-step reward per (s,a), then per s under the policy.
    Matrix r_sa(n, num_actions);
    for (int a = 0; a < num_actions; ++a) {
        r_sa.col(a) = (mdp.transition_for_action(a).array() * mdp.reward_for_action(a).array())
                          .rowwise()
                          .sum();
    }
    const Vector r_pi = (policy.probs().array() * r_sa.array()).rowwise().sum();

    const Matrix kernel = build_transition_kernel(mdp, policy);
    const Matrix system = Matrix::Identity(n, n) - gamma * kernel;
    Vector v = system.partialPivLu().solve(r_pi);

    Matrix q(n, num_actions);
    for (int a = 0; a < num_actions; ++a) {
        q.col(a) = r_sa.col(a) + gamma * (mdp.transition_for_action(a) * v);
    }
    Matrix adv = q.colwise() - v;

    ValueFunctions out{std::move(v), std::move(q), std::move(adv), 0.0};
    out.ret = mdp.start_dist().dot(out.v);

    // Internal consistency of the construction.
    if (((out.q.colwise() - out.v) - out.adv).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError("value_functions: advantage is not Q - V");
    }
    const double adv_balance =
        (policy.probs().array() * out.adv.array()).rowwise().sum().matrix().cwiseAbs().maxCoeff();
    if (adv_balance > 1e-10) {
        throw ValidationError("value_functions: on-policy advantage expectation " +
                              std::to_string(adv_balance));
    }
    return out;
}

double discounted_return(const Mdp& mdp, const TabularPolicy& policy) {
    const Visitation d = discounted_visitation(mdp, policy);
    const int n = mdp.num_states();
    double expected_reward = 0.0;
    for (int a = 0; a < mdp.num_actions(); ++a) {
        const Vector per_state =
            (mdp.transition_for_action(a).array() * mdp.reward_for_action(a).array())
                .rowwise()
                .sum();
        for (int s = 0; s < n; ++s) {
            expected_reward += d.dist(s) * policy.prob(s, a) * per_state(s);
        }
    }
    return expected_reward / (1.0 - mdp.gamma());
}

double return_identity(const Mdp& mdp, const TabularPolicy& policy,
                       const ShapingFunction& f) {
    check_shapes(mdp, policy);
    check_shapes(mdp, f);
    const Visitation d = discounted_visitation(mdp, policy);
    const double gamma = mdp.gamma();
    const int n = mdp.num_states();

    double shaped_reward = 0.0;
    for (int a = 0; a < mdp.num_actions(); ++a) {
        const Matrix& p = mdp.transition_for_action(a);
        const Matrix& r = mdp.reward_for_action(a);
        for (int s = 0; s < n; ++s) {
            const double w = d.dist(s) * policy.prob(s, a);
            if (w == 0.0) continue;
            double inner = 0.0;
            for (int sp = 0; sp < n; ++sp) {
                if (p(s, sp) == 0.0) continue;
                inner += p(s, sp) * (r(s, sp) + gamma * f.values(sp) - f.values(s));
            }
            shaped_reward += w * inner;
        }
    }
    return mdp.start_dist().dot(f.values) + shaped_reward / (1.0 - gamma);
}

double visitation_balance_residual(const Mdp& mdp, const TabularPolicy& policy,
                                   const ShapingFunction& f) {
    check_shapes(mdp, policy);
    check_shapes(mdp, f);
    const Visitation d = discounted_visitation(mdp, policy);
    const Matrix kernel = build_transition_kernel(mdp, policy);
    const double gamma = mdp.gamma();

    const double start_term = (1.0 - gamma) * mdp.start_dist().dot(f.values);
    const double next_term = gamma * d.dist.dot(kernel * f.values);
    const double stationary_term = d.dist.dot(f.values);
    return start_term + next_term - stationary_term;
}

Mdp shaped_mdp(const Mdp& mdp, const ShapingFunction& f) {
    check_shapes(mdp, f);
    const int n = mdp.num_states();
    const double gamma = mdp.gamma();
    std::vector<Matrix> transition;
    std::vector<Matrix> reward;
    transition.reserve(mdp.num_actions());
    reward.reserve(mdp.num_actions());
    for (int a = 0; a < mdp.num_actions(); ++a) {
        transition.push_back(mdp.transition_for_action(a));
        Matrix r = mdp.reward_for_action(a);
        for (int s = 0; s < n; ++s) {
            for (int sp = 0; sp < n; ++sp) {
                r(s, sp) += gamma * f.values(sp) - f.values(s);
            }
        }
        reward.push_back(std::move(r));
    }
    return Mdp(std::move(transition), std::move(reward), mdp.start_dist(), gamma);
}

}  // namespace empilab
