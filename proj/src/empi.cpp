#include "empilab/empi.hpp"

#include <cmath>
#include <cstdio>

namespace empilab {

namespace {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void validate_config(const EmpiConfig& config, int num_actions) {
    if (config.max_iters < 1) throw ValidationError("EmpiConfig: max_iters must be >= 1");
    if (!(config.stop_tol >= 0.0)) throw ValidationError("EmpiConfig: stop_tol must be >= 0");
    if (!(config.floor > 0.0) || config.floor * num_actions >= 1.0) {
        throw ValidationError("EmpiConfig: floor must lie in (0, 1/|A|)");
    }
}

/// Mixes the row toward uniform just enough to lift its minimum to eta.
/// Row mass is preserved (mixture of two distributions); cwiseMax pins
/// round-off dust on entries that land exactly at eta.
Vector floor_row(const Vector& row, double eta) {
    const double lo = row.minCoeff();
    if (lo >= eta) return row;
    const int n = static_cast<int>(row.size());
    const double uniform = 1.0 / n;
    const double lambda = (eta - lo) / (uniform - lo);
    Vector out = (1.0 - lambda) * row + Vector::Constant(n, lambda * uniform);
    return out.cwiseMax(eta);
}

struct StepOutcome {
    TabularPolicy next;
    double objective;
    double tv_avg;
};

/// Shared core of both iteration flavors: per-state exact maximization of
/// sum_a p(a) table(s,a) - (coef(s)/2) ||p - pi(.|s)||_1 at states the
/// current visitation reaches, then the floor, then the fallback that keeps
/// the penalized objective (and with it the improvement guarantee)
/// nonnegative.
StepOutcome solve_iteration(const Mdp& mdp, const TabularPolicy& current,
                            const Matrix& table, const Vector& coef, double eta) {
    const int n = mdp.num_states();
    const Visitation d = discounted_visitation(mdp, current);

    Matrix next = current.probs();
    for (int s = 0; s < n; ++s) {
        if (d.dist(s) == 0.0) continue;  // no weight in the objective; leave as is
        Vector row = per_state_step(table.row(s).transpose(),
                                    current.probs().row(s).transpose(), coef(s));
        next.row(s) = floor_row(row, eta).transpose();
    }

    double objective = 0.0;
    double tv_avg = 0.0;
    for (int s = 0; s < n; ++s) {
        const Vector delta = (next.row(s) - current.probs().row(s)).transpose();
        const double l1 = delta.cwiseAbs().sum();
        objective += d.dist(s) * (delta.dot(table.row(s).transpose()) - 0.5 * coef(s) * l1);
        tv_avg += d.dist(s) * 0.5 * l1;
    }
    if (objective < 0.0) {
        // Flooring can only lose a sliver of the gain; if it lost more than
        // the whole gain, the current policy (objective 0) is the maximizer.
        return StepOutcome{current, 0.0, 0.0};
    }
    return StepOutcome{TabularPolicy(std::move(next)), objective, tv_avg};
}

IterationRecord make_record(const Mdp& mdp, const TabularPolicy& current,
                            const StepOutcome& outcome, Vector penalty) {
    IterationRecord record;
    record.objective_value = outcome.objective;
    record.j_before = value_functions(mdp, current).ret;
    record.j_after = value_functions(mdp, outcome.next).ret;
    record.penalty_per_state = std::move(penalty);
    record.tv_avg = outcome.tv_avg;
    record.improved = record.j_after > record.j_before;
    if (record.objective_value < -1e-12) {
        throw std::logic_error("empi: penalized objective went negative");
    }
    if (record.j_after < record.j_before - 1e-9) {
        throw std::logic_error("empi: exact return decreased from " +
                               std::to_string(record.j_before) + " to " +
                               std::to_string(record.j_after));
    }
    return record;
}

}  // namespace

double penalty_coefficient(const Mdp& mdp, const ShapingFunction& f) {
    const double eps = max_abs_expected_residual(mdp, f);
    return 2.0 * mdp.gamma() * eps / (1.0 - mdp.gamma());
}

Vector per_state_step(const Vector& advantage_row, const Vector& policy_row, double c) {
    if (advantage_row.size() != policy_row.size()) {
        throw DimensionError("per_state_step: row sizes differ");
    }
    if (!(c >= 0.0)) throw ValidationError("per_state_step: coefficient must be >= 0");

    const int n = static_cast<int>(advantage_row.size());
    int best = 0;
    for (int a = 1; a < n; ++a) {
        if (advantage_row(a) > advantage_row(best)) best = a;  // lowest index on ties
    }

    // Moving mass m from a to the best action gains m (adv(best) - adv(a))
    // and pays c * m in penalty, so the move is all-or-nothing per action.
    Vector out = policy_row;
    double moved = 0.0;
    for (int a = 0; a < n; ++a) {
        if (a == best) continue;
        if (advantage_row(best) - advantage_row(a) > c) {
            moved += out(a);
            out(a) = 0.0;
        }
    }
    out(best) += moved;
    return out;
}

std::pair<TabularPolicy, IterationRecord> empi_iteration(const Mdp& mdp,
                                                         const TabularPolicy& current,
                                                         const ShapingFunction& f,
                                                         const EmpiConfig& config) {
    check_shapes(mdp, current);
    check_shapes(mdp, f);
    validate_config(config, mdp.num_actions());
    if (current.min_prob() < config.floor * (1.0 - 1e-9)) {
        throw ValidationError("empi_iteration: current policy has mass below the floor");
    }

    const Matrix table = expected_residual_table(mdp, f);
    const double c = 2.0 * mdp.gamma() * table.cwiseAbs().maxCoeff() / (1.0 - mdp.gamma());
    const StepOutcome outcome =
        solve_iteration(mdp, current, table, Vector::Constant(mdp.num_states(), c),
                        config.floor);
    IterationRecord record =
        make_record(mdp, current, outcome, Vector::Constant(mdp.num_states(), c));
    return {outcome.next, std::move(record)};
}

std::pair<TabularPolicy, IterationRecord> empi_iteration_estimated(
    const Mdp& mdp, const TabularPolicy& current, const AdvantageEstimate& estimate,
    const EmpiConfig& config) {
    check_shapes(mdp, current);
    validate_config(config, mdp.num_actions());
    if (estimate.a_hat.rows() != mdp.num_states() ||
        estimate.a_hat.cols() != mdp.num_actions() ||
        estimate.c_per_state.size() != mdp.num_states()) {
        throw DimensionError("empi_iteration_estimated: estimate shape mismatch");
    }
    if (current.min_prob() < config.floor * (1.0 - 1e-9)) {
        throw ValidationError("empi_iteration_estimated: current policy has mass below the floor");
    }

    const ValueFunctions vf = value_functions(mdp, current);
    const double eps = vf.adv.cwiseAbs().maxCoeff();
    const double base = mdp.gamma() * eps / (1.0 - mdp.gamma());
    Vector coef = 2.0 * (estimate.c_per_state.array() + base);
    if (config.penalty_mode == PenaltyMode::UniformC) {
        coef.setConstant(coef.maxCoeff());
    }

    const StepOutcome outcome =
        solve_iteration(mdp, current, estimate.a_hat, coef, config.floor);
    IterationRecord record = make_record(mdp, current, outcome, std::move(coef));
    return {outcome.next, std::move(record)};
}

EmpiRun run_empi(const Mdp& mdp, const TabularPolicy& initial, const EmpiConfig& config,
                 const std::optional<ShapingFunction>& f, const EstimatorFn& estimator) {
    check_shapes(mdp, initial);
    validate_config(config, mdp.num_actions());
    if (config.shaping_mode == ShapingMode::Supplied && !f) {
        throw ValidationError("run_empi: Supplied mode needs a shaping function");
    }
    if (config.shaping_mode == ShapingMode::Estimated && !estimator) {
        throw ValidationError("run_empi: Estimated mode needs an estimator");
    }

    EmpiRun run{{}, initial};
    for (int i = 1; i <= config.max_iters; ++i) {
        std::pair<TabularPolicy, IterationRecord> step = [&] {
            switch (config.shaping_mode) {
                case ShapingMode::Estimated:
                    return empi_iteration_estimated(
                        mdp, run.final_policy, estimator(mdp, run.final_policy, i), config);
                case ShapingMode::Supplied:
                    return empi_iteration(mdp, run.final_policy, *f, config);
                case ShapingMode::ExactValue:
                default:
                    return empi_iteration(
                        mdp, run.final_policy,
                        ShapingFunction(value_functions(mdp, run.final_policy).v), config);
            }
        }();
        step.second.iter = i;
        run.records.push_back(std::move(step.second));
        run.final_policy = std::move(step.first);
        const IterationRecord& last = run.records.back();
        if (last.j_after - last.j_before <= config.stop_tol) break;
    }
    return run;
}

std::string iteration_csv_header() {
    return "iter,j_before,j_after,objective_value,penalty,tv_avg,improved";
}

std::string iteration_csv_row(const IterationRecord& record) {
    std::string row = std::to_string(record.iter);
    for (double x : {record.j_before, record.j_after, record.objective_value,
                     record.penalty_per_state.maxCoeff(), record.tv_avg}) {
        row += ',';
        row += format_double(x);
    }
    row += record.improved ? ",1" : ",0";
    return row;
}

}  // namespace empilab
