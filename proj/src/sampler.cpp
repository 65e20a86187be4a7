#include "empilab/sampler.hpp"

#include <cmath>
#include <cstdio>

namespace empilab {

namespace {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

SampleEstimate reduce(const std::vector<double>& values, int horizon, double truncation_bound,
                      std::uint64_t seed) {
    const int n = static_cast<int>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double std_error = n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(double(n)) : 0.0;
    return SampleEstimate{mean, std_error, n, horizon, truncation_bound, seed};
}

}  // namespace

int default_horizon(const Mdp& mdp, double tol) {
    if (!(tol > 0.0)) throw ValidationError("default_horizon: tol must be positive");
    const double gamma = mdp.gamma();
    const double r_max = mdp.max_abs_reward();
    if (gamma == 0.0 || r_max == 0.0) return 1;
    const double h = std::log(tol * (1.0 - gamma) / r_max) / std::log(gamma);
    return std::max(1, static_cast<int>(std::ceil(h)));
}

Trajectory sample_trajectory(const Mdp& mdp, const TabularPolicy& policy, int horizon,
                             std::uint64_t seed) {
    check_shapes(mdp, policy);
    if (horizon < 1) throw ValidationError("sample_trajectory: horizon must be >= 1");

    Rng rng(seed);
    Trajectory tau;
    tau.horizon = horizon;
    tau.seed = seed;
    tau.states.reserve(horizon);
    tau.actions.reserve(horizon);
    tau.next_states.reserve(horizon);
    tau.rewards.reserve(horizon);

    const int n = mdp.num_states();
    int s = rng.categorical(mdp.start_dist(), n);
    for (int t = 0; t < horizon; ++t) {
        const int a = rng.categorical(policy.probs().row(s), mdp.num_actions());
        const int sp = rng.categorical(mdp.transition_for_action(a).row(s), n);
        tau.states.push_back(s);
        tau.actions.push_back(a);
        tau.next_states.push_back(sp);
        tau.rewards.push_back(mdp.reward(s, a, sp));
        s = sp;
    }
    return tau;
}

SampleEstimate mc_return(const Mdp& mdp, const TabularPolicy& policy, int n, int horizon,
                         std::uint64_t seed) {
    if (n < 2) throw ValidationError("mc_return: need n >= 2 samples");
    const double gamma = mdp.gamma();

    std::vector<double> sums(n);
    for (int i = 0; i < n; ++i) {
        const Trajectory tau = sample_trajectory(mdp, policy, horizon, substream_seed(seed, i));
        double g = 0.0;
        double discount = 1.0;
        for (int t = 0; t < horizon; ++t) {
            g += discount * tau.rewards[t];
            discount *= gamma;
        }
        sums[i] = g;
    }
    const double truncation =
        std::pow(gamma, horizon) * mdp.max_abs_reward() / (1.0 - gamma);
    return reduce(sums, horizon, truncation, seed);
}

SampleEstimate mc_objective(const Mdp& mdp, const TabularPolicy& old_policy,
                            const TabularPolicy& new_policy,
                            const AdvantageEstimate& estimate, const Vector& penalty_per_state,
                            int n, int horizon, std::uint64_t seed) {
    check_shapes(mdp, old_policy);
    check_shapes(mdp, new_policy);
    if (n < 2) throw ValidationError("mc_objective: need n >= 2 samples");
    if (penalty_per_state.size() != mdp.num_states()) {
        throw DimensionError("mc_objective: penalty vector has wrong length");
    }
    if (estimate.a_hat.rows() != mdp.num_states() ||
        estimate.a_hat.cols() != mdp.num_actions()) {
        throw DimensionError("mc_objective: estimate table shape mismatch");
    }
    const double gamma = mdp.gamma();
    const int num_states = mdp.num_states();

    Vector tv(num_states);
    for (int s = 0; s < num_states; ++s) {
        tv(s) = 0.5 * (new_policy.probs().row(s) - old_policy.probs().row(s)).cwiseAbs().sum();
    }

    std::vector<double> sums(n);
    for (int i = 0; i < n; ++i) {
        const Trajectory tau =
            sample_trajectory(mdp, old_policy, horizon, substream_seed(seed, i));
        double g = 0.0;
        double discount = 1.0;
        for (int t = 0; t < horizon; ++t) {
            const int s = tau.states[t];
            const int a = tau.actions[t];
            // pi(a|s) > 0 because the action was sampled from pi.
            const double ratio = new_policy.prob(s, a) / old_policy.prob(s, a);
            g += discount * (ratio * estimate.a_hat(s, a) - penalty_per_state(s) * tv(s));
            discount *= gamma;
        }
        sums[i] = g;
    }

    // Scale for the truncated tail of the objective's gamma^t sum.
    double per_step_max = 0.0;
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
            if (old_policy.prob(s, a) == 0.0) continue;
            const double ratio = new_policy.prob(s, a) / old_policy.prob(s, a);
            per_step_max = std::max(per_step_max,
                                    std::abs(ratio * estimate.a_hat(s, a)) +
                                        penalty_per_state(s) * tv(s));
        }
    }
    const double truncation = std::pow(gamma, horizon) * per_step_max / (1.0 - gamma);
    return reduce(sums, horizon, truncation, seed);
}

AdvantageEstimate corrupt_value_estimator(const Mdp& mdp, const TabularPolicy& policy,
                                          double noise_scale, std::uint64_t seed) {
    check_shapes(mdp, policy);
    if (!(noise_scale >= 0.0)) {
        throw ValidationError("corrupt_value_estimator: noise scale must be >= 0");
    }
    const ValueFunctions vf = value_functions(mdp, policy);

    Rng rng(seed);
    Vector v_hat = vf.v;
    for (int s = 0; s < mdp.num_states(); ++s) {
        v_hat(s) += rng.uniform(-noise_scale, noise_scale);
    }

    const double gamma = mdp.gamma();
    Matrix a_hat(mdp.num_states(), mdp.num_actions());
    for (int a = 0; a < mdp.num_actions(); ++a) {
        const Vector q_hat =
            (mdp.transition_for_action(a).array() *
             (mdp.reward_for_action(a) + gamma * v_hat.transpose().replicate(mdp.num_states(), 1))
                 .array())
                .rowwise()
                .sum();
        a_hat.col(a) = q_hat - v_hat;
    }
    Vector c = (vf.adv - a_hat).cwiseAbs().rowwise().maxCoeff();
    return AdvantageEstimate{std::move(a_hat), std::move(c)};
}

double worst_case_epsilon(const Mdp& mdp) {
    return 2.0 * mdp.max_abs_reward() / (1.0 - mdp.gamma());
}

double heuristic_epsilon(const AdvantageEstimate& estimate,
                         const std::vector<Trajectory>& trajectories) {
    double m = 0.0;
    for (const Trajectory& tau : trajectories) {
        for (int t = 0; t < tau.horizon; ++t) {
            m = std::max(m, std::abs(estimate.a_hat(tau.states[t], tau.actions[t])));
        }
    }
    return m;
}

std::string sample_csv_header() {
    return "mean,std_error,n,horizon,truncation_bound,seed";
}

std::string sample_csv_row(const SampleEstimate& estimate) {
    return format_double(estimate.mean) + "," + format_double(estimate.std_error) + "," +
           std::to_string(estimate.n) + "," + std::to_string(estimate.horizon) + "," +
           format_double(estimate.truncation_bound) + "," + std::to_string(estimate.seed);
}

}  // namespace empilab
