#include <doctest.h>

#include <cmath>
#include <limits>

#include "empilab/empi.hpp"
#include "empilab/sampler.hpp"
#include "test_support.hpp"

using namespace empilab;
using namespace empilab::testing;

namespace {

/// Two-state bandit: both actions lead to a uniform next state, action 0
/// pays 1 and action 1 pays 0, so the advantage gap is exactly the reward
/// gap at every state and policy.
Mdp bandit_mdp(double gamma) {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    std::vector<Matrix> transition{p, p};
    std::vector<Matrix> reward{Matrix::Constant(2, 2, 1.0), Matrix::Zero(2, 2)};
    return Mdp(std::move(transition), std::move(reward), Vector::Constant(2, 0.5), gamma);
}

}  // namespace

TEST_CASE("penalty coefficient: closed forms and the value-shaping identity") {
    Rng rng(109);
    GarnetSpec spec{5, 3, 2, 0.0, 13};
    const Mdp myopic = generate_garnet(spec, 0.0);
    CHECK(penalty_coefficient(myopic, random_shaping(5, rng)) == 0.0);

    const Mdp one = single_state_mdp(0.9);
    const ShapingFunction v_one(value_functions(one, TabularPolicy::uniform(1, 1)).v);
    CHECK(penalty_coefficient(one, v_one) <= 1e-12);

    for (int trial = 0; trial < 20; ++trial) {
        const Mdp mdp = random_mdp(rng, 6, 4, 0.9);
        const TabularPolicy pi = random_policy(mdp.num_states(), mdp.num_actions(), rng);
        const ValueFunctions vf = value_functions(mdp, pi);
        const double expected =
            2.0 * mdp.gamma() * vf.adv.cwiseAbs().maxCoeff() / (1.0 - mdp.gamma());
        CHECK(penalty_coefficient(mdp, ShapingFunction(vf.v)) ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("per-state step: frozen two-action cases against grid and lp oracles") {
    Vector adv(2), pol(2);
    adv << 1.0, 0.0;
    pol << 0.5, 0.5;

    // Gap 1 > C = 0.4: everything moves, gain 0.5 * 1 - 0.2 * 1 = 0.3.
    const Vector moved = per_state_step(adv, pol, 0.4);
    CHECK(moved(0) == 1.0);
    CHECK(moved(1) == 0.0);
    const double gain = step_objective(adv, pol, moved, 0.4);
    CHECK(gain == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(gain == doctest::Approx(grid_step_objective_oracle(adv, pol, 0.4)).epsilon(1e-6));
    CHECK(gain == doctest::Approx(lp_step_objective_oracle(adv, pol, 0.4)).epsilon(1e-6));

    // Gap 1 < C = 2.5: movement is unprofitable.
    const Vector frozen = per_state_step(adv, pol, 2.5);
    CHECK((frozen - pol).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(lp_step_objective_oracle(adv, pol, 2.5)) <= 1e-6);
    CHECK(std::abs(grid_step_objective_oracle(adv, pol, 2.5)) <= 1e-6);

    // C = 0 with a unique maximum is the greedy point mass.
    const Vector greedy = per_state_step(adv, pol, 0.0);
    CHECK(greedy(0) == 1.0);
    CHECK(greedy(1) == 0.0);

    // Exact ties stay put; the receiving action is the lowest index.
    Vector tied(3), pol3(3);
    tied << 1.0, 1.0, 0.0;
    pol3 << 0.2, 0.3, 0.5;
    const Vector after = per_state_step(tied, pol3, 0.0);
    CHECK(after(0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(after(1) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(after(2) == 0.0);

    CHECK_THROWS_AS(per_state_step(adv, pol, -0.1), ValidationError);
}

TEST_CASE("per-state step attains the lp optimum on random rows") {
    Rng rng(113);
    for (int trial = 0; trial < 400; ++trial) {
        const int num_actions = 2 + rng.uniform_int(4);
        Vector adv(num_actions), pol(num_actions);
        double sum = 0.0;
        for (int a = 0; a < num_actions; ++a) {
            adv(a) = rng.uniform(-2.0, 2.0);
            pol(a) = 0.01 + rng.uniform();
            sum += pol(a);
        }
        pol /= sum;
        const double c = trial % 7 == 0 ? 0.0 : rng.uniform(0.0, 3.0);

        const Vector out = per_state_step(adv, pol, c);
        CHECK(out.minCoeff() >= 0.0);
        CHECK(std::abs(out.sum() - 1.0) <= 1e-12);
        const double gain = step_objective(adv, pol, out, c);
        CHECK(gain >= -1e-15);
        CHECK(gain >= lp_step_objective_oracle(adv, pol, c) - 1e-6);
        if (num_actions == 2) {
            CHECK(gain >= grid_step_objective_oracle(adv, pol, c) - 1e-6);
        }
    }
}

TEST_CASE("one iteration: single state is a fixed point") {
    const Mdp one = single_state_mdp(0.9);
    const TabularPolicy pi = TabularPolicy::uniform(1, 1);
    const ShapingFunction f(value_functions(one, pi).v);
    const auto [next, record] = empi_iteration(one, pi, f, EmpiConfig{});
    CHECK(next.probs()(0, 0) == 1.0);
    CHECK(record.objective_value == 0.0);
    CHECK(record.j_after == record.j_before);
    CHECK_FALSE(record.improved);
}

TEST_CASE("one iteration moves toward a dominant action when the gap beats C") {
    const Mdp mdp = bandit_mdp(0.3);  // C = (2 * 0.3 / 0.7) * 0.5 < gap 1
    const TabularPolicy pi = TabularPolicy::uniform(2, 2);
    const ShapingFunction f(value_functions(mdp, pi).v);
    const auto [next, record] = empi_iteration(mdp, pi, f, EmpiConfig{});
    CHECK(next.probs()(0, 0) > 0.99);
    CHECK(next.probs()(1, 0) > 0.99);
    CHECK(record.j_after > record.j_before);
    CHECK(record.improved);
    CHECK(record.objective_value > 0.0);
    CHECK(record.j_after == doctest::Approx(discounted_return(mdp, next)).epsilon(1e-12));
}

TEST_CASE("one iteration freezes when C dominates every gap") {
    const Mdp mdp = bandit_mdp(0.9);  // C = 18 * max|A| >= 9 >> gap 1
    const TabularPolicy pi = TabularPolicy::uniform(2, 2);
    const ShapingFunction f(value_functions(mdp, pi).v);
    const auto [next, record] = empi_iteration(mdp, pi, f, EmpiConfig{});
    CHECK((next.probs() - pi.probs()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(record.objective_value == 0.0);
    CHECK(record.j_after == record.j_before);
}

TEST_CASE("iteration preconditions") {
    const Mdp mdp = bandit_mdp(0.3);
    Matrix det = Matrix::Zero(2, 2);
    det.col(0).setOnes();
    const ShapingFunction f = ShapingFunction::zero(2);
    CHECK_THROWS_AS(empi_iteration(mdp, TabularPolicy{det}, f, EmpiConfig{}),
                    ValidationError);

    EmpiConfig bad;
    bad.floor = 0.6;  // 0.6 * 2 actions >= 1
    CHECK_THROWS_AS(empi_iteration(mdp, TabularPolicy::uniform(2, 2), f, bad),
                    ValidationError);
}

TEST_CASE("estimated iteration with the exact table reproduces the exact step") {
    Rng rng(127);
    for (int trial = 0; trial < 10; ++trial) {
        const Mdp mdp = random_mdp(rng, 6, 3, 0.4);
        const TabularPolicy pi =
            TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
        const ShapingFunction f(value_functions(mdp, pi).v);
        const auto [exact_next, exact_record] = empi_iteration(mdp, pi, f, EmpiConfig{});
        const auto [est_next, est_record] = empi_iteration_estimated(
            mdp, pi, exact_advantage_estimate(mdp, pi), EmpiConfig{});
        CHECK((exact_next.probs() - est_next.probs()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(est_record.j_after == doctest::Approx(exact_record.j_after).epsilon(1e-12));
    }
}

TEST_CASE("per-state constant shifts are absorbed by the step and show up in c") {
    Rng rng(131);
    const Mdp mdp = random_mdp(rng, 5, 3, 0.5);
    const TabularPolicy pi = TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
    const ValueFunctions vf = value_functions(mdp, pi);

    Vector shift(mdp.num_states());
    for (int s = 0; s < mdp.num_states(); ++s) shift(s) = rng.uniform(-1.0, 1.0);
    Matrix shifted = vf.adv;
    for (int s = 0; s < mdp.num_states(); ++s) shifted.row(s).array() += shift(s);

    // Same coefficient, same output: the shift is a pi'-independent constant.
    for (int s = 0; s < mdp.num_states(); ++s) {
        const Vector base =
            per_state_step(vf.adv.row(s).transpose(), pi.probs().row(s).transpose(), 0.7);
        const Vector moved =
            per_state_step(shifted.row(s).transpose(), pi.probs().row(s).transpose(), 0.7);
        CHECK((base - moved).cwiseAbs().maxCoeff() == 0.0);
    }

    const AdvantageEstimate estimate = make_advantage_estimate(mdp, pi, shifted);
    CHECK((estimate.c_per_state - shift.cwiseAbs()).cwiseAbs().maxCoeff() <= 1e-12);

    // The inflated penalty keeps the certified step monotone.
    const auto [next, record] = empi_iteration_estimated(mdp, pi, estimate, EmpiConfig{});
    CHECK(record.j_after >= record.j_before - 1e-9);
}

TEST_CASE("a heavily corrupted estimate freezes the iteration") {
    Rng rng(137);
    const Mdp mdp = random_mdp(rng, 6, 3, 0.5);
    const TabularPolicy pi = TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
    Matrix garbage(mdp.num_states(), mdp.num_actions());
    for (int s = 0; s < mdp.num_states(); ++s) {
        for (int a = 0; a < mdp.num_actions(); ++a) garbage(s, a) = rng.uniform(-30.0, 30.0);
    }
    const AdvantageEstimate estimate = make_advantage_estimate(mdp, pi, garbage);
    CHECK(estimate.c_per_state.minCoeff() > 1.0);
    const auto [next, record] = empi_iteration_estimated(mdp, pi, estimate, EmpiConfig{});
    CHECK((next.probs() - pi.probs()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(record.j_after == record.j_before);
}

TEST_CASE("run loop: stopping rule and the trivial cases") {
    const Mdp one = single_state_mdp(0.9);
    EmpiConfig config;
    const EmpiRun trivial = run_empi(one, TabularPolicy::uniform(1, 1), config);
    CHECK(trivial.records.size() == 1);
    CHECK(trivial.records[0].j_after == trivial.records[0].j_before);

    // An infinite tolerance stops after exactly one iteration.
    const Mdp mdp = bandit_mdp(0.3);
    config.stop_tol = std::numeric_limits<double>::infinity();
    const EmpiRun one_step = run_empi(mdp, TabularPolicy::uniform(2, 2), config);
    CHECK(one_step.records.size() == 1);

    config.stop_tol = 1e-8;
    config.shaping_mode = ShapingMode::Supplied;
    CHECK_THROWS_AS(run_empi(mdp, TabularPolicy::uniform(2, 2), config), ValidationError);
    config.shaping_mode = ShapingMode::Estimated;
    CHECK_THROWS_AS(run_empi(mdp, TabularPolicy::uniform(2, 2), config), ValidationError);
}

TEST_CASE("run loop: monotone returns bounded by the optimal value") {
    Rng rng(139);
    for (int trial = 0; trial < 15; ++trial) {
        GarnetSpec spec{8, 4, 3, 0.0, 400 + static_cast<std::uint64_t>(trial)};
        const Mdp mdp = generate_garnet(spec, 0.2);  // small gamma: C < typical gaps
        EmpiConfig config;
        config.max_iters = 50;
        config.stop_tol = 1e-8;
        const EmpiRun run = run_empi(mdp, TabularPolicy::uniform(8, 4), config);
        double previous = run.records.front().j_before;
        for (const IterationRecord& record : run.records) {
            CHECK(record.j_before == doctest::Approx(previous).epsilon(1e-12));
            CHECK(record.j_after >= record.j_before - 1e-9);
            CHECK(record.objective_value >= -1e-12);
            previous = record.j_after;
        }
        CHECK(run.records.back().j_after <= optimal_return_oracle(mdp) + 1e-8);
    }
}

TEST_CASE("run loop: the conservative regime is an immediate fixed point") {
    GarnetSpec spec{8, 4, 3, 0.0, 991};
    const Mdp mdp = generate_garnet(spec, 0.9);
    EmpiConfig config;
    config.max_iters = 50;
    config.stop_tol = 1e-8;
    const EmpiRun run = run_empi(mdp, TabularPolicy::uniform(8, 4), config);
    CHECK(run.records.size() == 1);
    CHECK(run.records[0].j_after == run.records[0].j_before);
    CHECK(run.records[0].objective_value == 0.0);
}

TEST_CASE("floor keeps every emitted policy strictly positive and monotone") {
    GarnetSpec spec{6, 3, 2, 0.0, 555};
    const Mdp mdp = generate_garnet(spec, 0.2);
    EmpiConfig config;
    config.floor = 1e-6;
    TabularPolicy pi = TabularPolicy::uniform(6, 3);
    for (int i = 0; i < 5; ++i) {
        const ShapingFunction f(value_functions(mdp, pi).v);
        auto [next, record] = empi_iteration(mdp, pi, f, config);
        CHECK(next.min_prob() >= config.floor);
        CHECK(record.j_after >= record.j_before - 1e-9);
        pi = next;
    }
}

TEST_CASE("estimated runs stay monotone under value noise") {
    Rng rng(149);
    for (double sigma : {0.05, 0.2}) {
        for (int trial = 0; trial < 5; ++trial) {
            const Mdp mdp = random_mdp(rng, 8, 4, 0.5);
            EmpiConfig config;
            config.max_iters = 20;
            config.stop_tol = 1e-8;
            config.shaping_mode = ShapingMode::Estimated;
            const std::uint64_t seed = 7000 + trial;
            const EmpiRun run = run_empi(
                mdp, TabularPolicy::uniform(mdp.num_states(), mdp.num_actions()), config, {},
                [&](const Mdp& m, const TabularPolicy& p, int iter) {
                    return corrupt_value_estimator(m, p, sigma,
                                                   substream_seed(seed, iter));
                });
            for (const IterationRecord& record : run.records) {
                CHECK(record.j_after >= record.j_before - 1e-9);
                CHECK(record.objective_value >= -1e-12);
            }
        }
    }
}

TEST_CASE("iteration record serializes to one csv row") {
    const Mdp mdp = bandit_mdp(0.3);
    const TabularPolicy pi = TabularPolicy::uniform(2, 2);
    const ShapingFunction f(value_functions(mdp, pi).v);
    auto [next, record] = empi_iteration(mdp, pi, f, EmpiConfig{});
    record.iter = 3;
    CHECK(iteration_csv_header() ==
          "iter,j_before,j_after,objective_value,penalty,tv_avg,improved");
    const std::string row = iteration_csv_row(record);
    CHECK(row.rfind("3,", 0) == 0);
    CHECK(row.back() == '1');  // improved
}
