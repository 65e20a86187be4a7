#include "empilab/bounds.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace empilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix expected_reward_table(const Mdp& mdp) {
    Matrix r_sa(mdp.num_states(), mdp.num_actions());
    for (int a = 0; a < mdp.num_actions(); ++a) {
        r_sa.col(a) = (mdp.transition_for_action(a).array() * mdp.reward_for_action(a).array())
                          .rowwise()
                          .sum();
    }
    return r_sa;
}

/// max_s |E_{a~pi'}[A(s,a)]|, the scale that multiplies the divergence in
/// the advantage-based variants.
double new_policy_advantage_eps(const Matrix& true_adv, const TabularPolicy& new_policy) {
    return (new_policy.probs().array() * true_adv.array())
        .rowwise()
        .sum()
        .matrix()
        .cwiseAbs()
        .maxCoeff();
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

std::string to_string(BoundVariant variant) {
    switch (variant) {
        case BoundVariant::ExactVisitationTv: return "exact_visitation_tv";
        case BoundVariant::AvgPolicyTv: return "avg_policy_tv";
        case BoundVariant::AdvantageForm: return "advantage_form";
        case BoundVariant::EstimatorAware: return "estimator_aware";
        case BoundVariant::KlPinsker: return "kl_pinsker";
    }
    return "unknown";
}

Matrix expected_residual_table(const Mdp& mdp, const ShapingFunction& f) {
    check_shapes(mdp, f);
    Matrix table = expected_reward_table(mdp);
    const double gamma = mdp.gamma();
    for (int a = 0; a < mdp.num_actions(); ++a) {
        table.col(a) += gamma * (mdp.transition_for_action(a) * f.values) - f.values;
    }
    return table;
}

double max_abs_expected_residual(const Mdp& mdp, const ShapingFunction& f) {
    return expected_residual_table(mdp, f).cwiseAbs().maxCoeff();
}

TdResidualProfile td_residual_profile(const Mdp& mdp, const ShapingFunction& f,
                                      const TabularPolicy& new_policy) {
    check_shapes(mdp, new_policy);
    const Matrix table = expected_residual_table(mdp, f);
    Vector per_state = (new_policy.probs().array() * table.array()).rowwise().sum();
    const double eps = per_state.cwiseAbs().maxCoeff();
    const double eps_sa = table.cwiseAbs().maxCoeff();
    if (eps > eps_sa + 1e-12) {
        throw ValidationError("td_residual_profile: state max exceeds state-action max");
    }
    return TdResidualProfile{std::move(per_state), eps, eps_sa};
}

double surrogate(const Mdp& mdp, const TabularPolicy& old_policy,
                 const ShapingFunction& f, const TabularPolicy& new_policy) {
    check_shapes(mdp, old_policy);
    check_shapes(mdp, new_policy);
    const Matrix table = expected_residual_table(mdp, f);
    const Visitation d = discounted_visitation(mdp, old_policy);

    double total = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double p_old = old_policy.prob(s, a);
            const double p_new = new_policy.prob(s, a);
            if (p_old == 0.0) {
                if (p_new > 0.0) {
                    throw SupportViolation("surrogate: pi(a|s) = 0 but pi'(a|s) = " +
                                           std::to_string(p_new) + " at (s=" + std::to_string(s) +
                                           ",a=" + std::to_string(a) + ")");
                }
                continue;  // 0 * (ratio - 1) -> 0 by the limit convention
            }
            total += d.dist(s) * p_old * (p_new / p_old - 1.0) * table(s, a);
        }
    }
    return total;
}

DivergenceProfile divergence_profile(const Mdp& mdp, const TabularPolicy& old_policy,
                                     const TabularPolicy& new_policy) {
    check_shapes(mdp, old_policy);
    check_shapes(mdp, new_policy);
    const int n = mdp.num_states();
    const Visitation d = discounted_visitation(mdp, old_policy);

    Vector tv_per_state(n);
    Vector kl_per_state(n);
    bool kl_support_ok = true;
    for (int s = 0; s < n; ++s) {
        tv_per_state(s) =
            0.5 * (new_policy.probs().row(s) - old_policy.probs().row(s)).cwiseAbs().sum();
        double kl = 0.0;
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double p = old_policy.prob(s, a);
            if (p == 0.0) continue;
            const double q = new_policy.prob(s, a);
            if (q <= 0.0) {
                kl_support_ok = false;
                kl = kInf;
                break;
            }
            kl += p * std::log(p / q);
        }
        kl_per_state(s) = std::max(kl, 0.0);  // clamp fp noise on near-equal rows
    }
    const double tv_avg = d.dist.dot(tv_per_state);
    const double tv_max = tv_per_state.maxCoeff();
    const double kl_avg = kl_support_ok ? d.dist.dot(kl_per_state) : kInf;
    return DivergenceProfile{std::move(tv_per_state), tv_avg, tv_max, kl_avg, kl_support_ok};
}

VisitationShift visitation_shift_bound(const Mdp& mdp, const TabularPolicy& old_policy,
                                       const TabularPolicy& new_policy) {
    const Visitation d_old = discounted_visitation(mdp, old_policy);
    const Visitation d_new = discounted_visitation(mdp, new_policy);
    const double lhs = (d_new.dist - d_old.dist).cwiseAbs().sum();
    const DivergenceProfile profile = divergence_profile(mdp, old_policy, new_policy);
    const double gamma = mdp.gamma();
    const double rhs = 2.0 * gamma / (1.0 - gamma) * profile.tv_avg;
    return VisitationShift{lhs, rhs};
}

AdvantageEstimate exact_advantage_estimate(const Mdp& mdp, const TabularPolicy& policy) {
    ValueFunctions vf = value_functions(mdp, policy);
    return AdvantageEstimate{std::move(vf.adv), Vector::Zero(mdp.num_states())};
}

AdvantageEstimate make_advantage_estimate(const Mdp& mdp, const TabularPolicy& policy,
                                          Matrix a_hat) {
    if (a_hat.rows() != mdp.num_states() || a_hat.cols() != mdp.num_actions()) {
        throw DimensionError("make_advantage_estimate: table is " + std::to_string(a_hat.rows()) +
                             "x" + std::to_string(a_hat.cols()));
    }
    const ValueFunctions vf = value_functions(mdp, policy);
    Vector c = (vf.adv - a_hat).cwiseAbs().rowwise().maxCoeff();
    return AdvantageEstimate{std::move(a_hat), std::move(c)};
}

BoundReport improvement_bound(const Mdp& mdp, const TabularPolicy& old_policy,
                              const TabularPolicy& new_policy, const ShapingFunction& f,
                              BoundVariant variant,
                              const std::optional<AdvantageEstimate>& estimate,
                              const BoundOptions& options) {
    check_shapes(mdp, old_policy);
    check_shapes(mdp, new_policy);
    const double gamma = mdp.gamma();
    const double horizon_factor = 1.0 / (1.0 - gamma);
    const double scale = options.penalty_scale;

    const ValueFunctions vf_old = value_functions(mdp, old_policy);
    const ValueFunctions vf_new = value_functions(mdp, new_policy);
    const double true_improvement = vf_new.ret - vf_old.ret;

    const Visitation d_old = discounted_visitation(mdp, old_policy);
    const DivergenceProfile divergences = divergence_profile(mdp, old_policy, new_policy);

    BoundReport report{};
    report.true_improvement = true_improvement;
    report.variant = variant;
    report.tv_avg = divergences.tv_avg;
    report.tv_max = divergences.tv_max;
    report.kl_avg = divergences.kl_avg;

    switch (variant) {
        case BoundVariant::ExactVisitationTv: {
            const double L = surrogate(mdp, old_policy, f, new_policy);
            const TdResidualProfile profile = td_residual_profile(mdp, f, new_policy);
            const Visitation d_new = discounted_visitation(mdp, new_policy);
            const double visitation_tv = 0.5 * (d_new.dist - d_old.dist).cwiseAbs().sum();
            const double coefficient = 2.0 * profile.eps;
            report.rhs = horizon_factor * (L - scale * coefficient * visitation_tv);
            report.terms = BoundTerms{L, profile.eps, visitation_tv, coefficient};
            break;
        }
        case BoundVariant::AvgPolicyTv: {
            const double L = surrogate(mdp, old_policy, f, new_policy);
            const TdResidualProfile profile = td_residual_profile(mdp, f, new_policy);
            const double coefficient = 2.0 * gamma * profile.eps * horizon_factor;
            report.rhs = horizon_factor * (L - scale * coefficient * divergences.tv_avg);
            report.terms = BoundTerms{L, profile.eps, divergences.tv_avg, coefficient};
            break;
        }
        case BoundVariant::AdvantageForm:
        case BoundVariant::KlPinsker: {
            const double eps = new_policy_advantage_eps(vf_old.adv, new_policy);
            const double adv_term =
                d_old.dist.dot((new_policy.probs().array() * vf_old.adv.array())
                                   .rowwise()
                                   .sum()
                                   .matrix());
            const double coefficient = 2.0 * gamma * eps * horizon_factor;
            const double divergence = variant == BoundVariant::AdvantageForm
                                          ? divergences.tv_avg
                                          : std::sqrt(0.5 * divergences.kl_avg);
            report.rhs = horizon_factor * (adv_term - scale * coefficient * divergence);
            report.terms = BoundTerms{adv_term, eps, divergence, coefficient};
            break;
        }
        case BoundVariant::EstimatorAware: {
            if (!estimate) {
                throw ValidationError("improvement_bound: EstimatorAware requires an estimate");
            }
            const Matrix& a_hat = estimate->a_hat;
            if (a_hat.rows() != mdp.num_states() || a_hat.cols() != mdp.num_actions()) {
                throw DimensionError("improvement_bound: estimate table shape mismatch");
            }
            const double eps = new_policy_advantage_eps(vf_old.adv, new_policy);
            double rhs_sum = 0.0;
            double surrogate_sum = 0.0;
            double coefficient_max = 0.0;
            for (int s = 0; s < mdp.num_states(); ++s) {
                const double new_term = new_policy.probs().row(s).dot(a_hat.row(s));
                const double old_term = old_policy.probs().row(s).dot(a_hat.row(s));
                const double coefficient =
                    2.0 * (estimate->c_per_state(s) + gamma * eps * horizon_factor);
                coefficient_max = std::max(coefficient_max, coefficient);
                surrogate_sum += d_old.dist(s) * (new_term - old_term);
                rhs_sum += d_old.dist(s) *
                           (new_term - old_term -
                            scale * coefficient * divergences.tv_per_state(s));
            }
            report.rhs = horizon_factor * rhs_sum;
            report.terms =
                BoundTerms{surrogate_sum, eps, divergences.tv_avg, coefficient_max};
            break;
        }
    }
    return report;
}

double trpo_worst_case(const Mdp& mdp, const TabularPolicy& old_policy,
                       const TabularPolicy& new_policy, double delta) {
    if (!(delta >= 0.0)) {
        throw ValidationError("trpo_worst_case: delta must be nonnegative");
    }
    const DivergenceProfile divergences = divergence_profile(mdp, old_policy, new_policy);
    if (!divergences.kl_support_ok || divergences.kl_avg > delta + 1e-12) {
        throw TrustRegionViolation("trpo_worst_case: average KL " +
                                       std::to_string(divergences.kl_avg) +
                                       " exceeds the radius " + std::to_string(delta),
                                   divergences.kl_avg);
    }
    const ValueFunctions vf_old = value_functions(mdp, old_policy);
    const double eps = new_policy_advantage_eps(vf_old.adv, new_policy);
    const double gamma = mdp.gamma();
    const double one_minus = 1.0 - gamma;
    return -std::sqrt(2.0 * delta) * gamma * eps / (one_minus * one_minus);
}

std::string bound_csv_header() {
    return "variant,lhs,rhs,L,epsilon,tv_avg,tv_max,kl_avg,penalty_coefficient";
}

std::string bound_csv_row(const BoundReport& report) {
    std::string row = to_string(report.variant);
    for (double x : {report.true_improvement, report.rhs, report.terms.surrogate_value,
                     report.terms.epsilon, report.tv_avg, report.tv_max, report.kl_avg,
                     report.terms.penalty_coefficient}) {
        row += ',';
        row += format_double(x);
    }
    return row;
}

}  // namespace empilab
