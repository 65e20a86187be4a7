#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "empilab/mdp.hpp"
#include "empilab/mdp_io.hpp"
#include "test_support.hpp"

using namespace empilab;
using namespace empilab::testing;

TEST_CASE("mdp validation names the offending index") {
    Matrix p(2, 2);
    p << 0.6, 0.5, 0.0, 1.0;  // row 0 sums to 1.1
    Matrix r = Matrix::Zero(2, 2);
    Vector mu(2);
    mu << 1.0, 0.0;
    CHECK_THROWS_WITH_AS(Mdp({p}, {r}, mu, 0.9), doctest::Contains("(s=0,a=0)"),
                         ValidationError);

    p << -0.1, 1.1, 0.0, 1.0;
    CHECK_THROWS_AS(Mdp({p}, {r}, mu, 0.9), ValidationError);

    p << 1.0, 0.0, 0.0, 1.0;
    CHECK_THROWS_AS(Mdp({p}, {r}, mu, 1.0), ValidationError);
    CHECK_THROWS_AS(Mdp({p}, {r}, mu, -0.1), ValidationError);

    Vector bad_mu(2);
    bad_mu << 0.7, 0.4;
    CHECK_THROWS_AS(Mdp({p}, {r}, bad_mu, 0.9), ValidationError);
}

TEST_CASE("policy and shaping validation") {
    Matrix probs(2, 2);
    probs << 0.5, 0.5, 0.9, 0.2;
    CHECK_THROWS_AS(TabularPolicy{probs}, ValidationError);

    Vector f(2);
    f << 1.0, std::nan("");
    CHECK_THROWS_AS(ShapingFunction{f}, ValidationError);

    const Mdp mdp = single_state_mdp(0.9);
    CHECK_THROWS_AS(build_transition_kernel(mdp, TabularPolicy::uniform(2, 1)),
                    DimensionError);
    CHECK_THROWS_AS(return_identity(mdp, TabularPolicy::uniform(1, 1),
                                    ShapingFunction::zero(3)),
                    DimensionError);
}

TEST_CASE("transition kernel: closed forms") {
    const Mdp one = single_state_mdp(0.9);
    CHECK(build_transition_kernel(one, TabularPolicy::uniform(1, 1))(0, 0) == 1.0);

    // Action 0 stays, action 1 swaps; the uniform mixture is (0.5, 0.5) rows.
    Matrix stay(2, 2), swap(2, 2);
    stay << 1, 0, 0, 1;
    swap << 0, 1, 1, 0;
    Vector mu = Vector::Constant(2, 0.5);
    const Mdp two({stay, swap}, {Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, mu, 0.9);
    const Matrix kernel = build_transition_kernel(two, TabularPolicy::uniform(2, 2));
    CHECK((kernel - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transition kernel matches the triple-loop oracle") {
    Rng rng(101);
    GarnetSpec spec{4, 3, 3, 0.0, 11};
    const Mdp mdp = generate_garnet(spec, 0.9);
    const TabularPolicy pi = random_policy(4, 3, rng);
    const Matrix kernel = build_transition_kernel(mdp, pi);
    CHECK((kernel - kernel_oracle(mdp, pi)).cwiseAbs().maxCoeff() <= 1e-14);

    // Row-stochasticity and the oracle across every size up to 6x6.
    for (int states = 1; states <= 6; ++states) {
        for (int actions = 1; actions <= 6; ++actions) {
            GarnetSpec small{states, actions, std::min(2, states), 0.0,
                             static_cast<std::uint64_t>(states * 10 + actions)};
            const Mdp m = generate_garnet(small, 0.5);
            const TabularPolicy p = random_policy(states, actions, rng);
            const Matrix k = build_transition_kernel(m, p);
            CHECK((k - kernel_oracle(m, p)).cwiseAbs().maxCoeff() <= 1e-14);
            for (int s = 0; s < states; ++s) {
                CHECK(k.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
                CHECK(k.row(s).minCoeff() >= 0.0);
            }
        }
    }
}

TEST_CASE("discounted visitation: closed forms and power-series oracle") {
    const Mdp one = single_state_mdp(0.9);
    CHECK(discounted_visitation(one, TabularPolicy::uniform(1, 1)).dist(0) == 1.0);

    // gamma = 0 collapses to the start distribution exactly.
    GarnetSpec spec{5, 3, 2, 0.0, 21};
    const Mdp zero_gamma = generate_garnet(spec, 0.0);
    Rng rng(7);
    const TabularPolicy pi = random_policy(5, 3, rng);
    CHECK((discounted_visitation(zero_gamma, pi).dist - zero_gamma.start_dist())
              .cwiseAbs()
              .maxCoeff() == 0.0);

    // Two-state chain at gamma = 1/2 splits the mass evenly.
    const Mdp chain = two_state_chain(0.5);
    const Visitation d = discounted_visitation(chain, TabularPolicy::uniform(2, 1));
    CHECK(d.dist(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.dist(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK((d.dist - visitation_oracle(chain, TabularPolicy::uniform(2, 1), 200))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
}

TEST_CASE("discounted visitation is a distribution on random instances") {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const Mdp mdp = random_mdp(rng, 8, 4, trial % 2 ? 0.9 : 0.97);
        const TabularPolicy pi = random_policy(mdp.num_states(), mdp.num_actions(), rng);
        const Visitation d = discounted_visitation(mdp, pi);
        CHECK(std::abs(d.dist.sum() - 1.0) <= 1e-10);
        CHECK(d.dist.minCoeff() >= 0.0);
        // Truncation tail gamma^T must sit well under the agreement bound.
        CHECK((d.dist - visitation_oracle(mdp, pi, 1500)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("value functions: geometric series and horizon-1 forms") {
    const Mdp one = single_state_mdp(0.9, 1.0);
    const ValueFunctions vf = value_functions(one, TabularPolicy::uniform(1, 1));
    CHECK(vf.v(0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(vf.q(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(vf.adv(0, 0) == doctest::Approx(0.0));
    CHECK(vf.ret == doctest::Approx(10.0).epsilon(1e-12));

    // gamma = 0: V is the one-step expected reward, Q the per-action one.
    Rng rng(5);
    GarnetSpec spec{4, 3, 2, 0.0, 3};
    const Mdp mdp = generate_garnet(spec, 0.0);
    const TabularPolicy pi = random_policy(4, 3, rng);
    const ValueFunctions vf0 = value_functions(mdp, pi);
    for (int s = 0; s < 4; ++s) {
        double expected_v = 0.0;
        for (int a = 0; a < 3; ++a) {
            double q = 0.0;
            for (int sp = 0; sp < 4; ++sp) {
                q += mdp.transition(s, a, sp) * mdp.reward(s, a, sp);
            }
            CHECK(vf0.q(s, a) == doctest::Approx(q).epsilon(1e-12));
            expected_v += pi.prob(s, a) * q;
        }
        CHECK(vf0.v(s) == doctest::Approx(expected_v).epsilon(1e-12));
    }
}

TEST_CASE("value functions match fixed-point iteration and satisfy invariants") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        GarnetSpec spec{5, 3, 3, 0.0, 100 + static_cast<std::uint64_t>(trial)};
        const Mdp mdp = generate_garnet(spec, 0.9);
        const TabularPolicy pi = random_policy(5, 3, rng);
        const ValueFunctions vf = value_functions(mdp, pi);
        CHECK((vf.v - value_fixed_point_oracle(mdp, pi, 500)).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK(std::abs(vf.ret - mdp.start_dist().dot(vf.v)) <= 1e-10);
        const Vector balance = (pi.probs().array() * vf.adv.array()).rowwise().sum();
        CHECK(balance.cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("discounted return: constants and agreement with <mu, V>") {
    CHECK(discounted_return(single_state_mdp(0.9), TabularPolicy::uniform(1, 1)) ==
          doctest::Approx(10.0).epsilon(1e-12));

    // Constant reward c gives c / (1 - gamma) for every policy.
    Rng rng(23);
    GarnetSpec spec{5, 3, 2, 0.0, 8};
    Mdp base = generate_garnet(spec, 0.8);
    std::vector<Matrix> transition, reward;
    for (int a = 0; a < base.num_actions(); ++a) {
        transition.push_back(base.transition_for_action(a));
        reward.push_back(Matrix::Constant(5, 5, 0.3));
    }
    const Mdp constant(std::move(transition), std::move(reward), base.start_dist(), 0.8);
    for (int k = 0; k < 5; ++k) {
        const TabularPolicy pi = random_policy(5, 3, rng);
        CHECK(discounted_return(constant, pi) == doctest::Approx(0.3 / 0.2).epsilon(1e-12));
    }

    for (int trial = 0; trial < 10; ++trial) {
        const Mdp mdp = random_mdp(rng, 5, 3, 0.92);
        const TabularPolicy pi = random_policy(mdp.num_states(), mdp.num_actions(), rng);
        CHECK(std::abs(discounted_return(mdp, pi) - value_functions(mdp, pi).ret) <= 1e-10);
    }
}

TEST_CASE("return identity: reductions and the all-f property") {
    Rng rng(29);
    const Mdp mdp = random_mdp(rng, 6, 3, 0.9);
    const TabularPolicy pi = random_policy(mdp.num_states(), mdp.num_actions(), rng);
    const double j = discounted_return(mdp, pi);

    CHECK(return_identity(mdp, pi, ShapingFunction::zero(mdp.num_states())) ==
          doctest::Approx(j).epsilon(1e-12));

    // f = V makes the residual term vanish, leaving E_mu[V].
    const ValueFunctions vf = value_functions(mdp, pi);
    CHECK(return_identity(mdp, pi, ShapingFunction(vf.v)) ==
          doctest::Approx(mdp.start_dist().dot(vf.v)).epsilon(1e-9));

    for (int k = 0; k < 50; ++k) {
        const ShapingFunction f = random_shaping(mdp.num_states(), rng, 3.0);
        CHECK(std::abs(return_identity(mdp, pi, f) - j) <= 1e-9);
    }
}

TEST_CASE("visitation balance residual vanishes") {
    Rng rng(31);
    const Mdp mdp = random_mdp(rng, 6, 4, 0.95);
    const TabularPolicy pi = random_policy(mdp.num_states(), mdp.num_actions(), rng);

    CHECK(visitation_balance_residual(mdp, pi, ShapingFunction::zero(mdp.num_states())) ==
          doctest::Approx(0.0));
    CHECK(std::abs(visitation_balance_residual(
              mdp, pi, ShapingFunction(Vector::Ones(mdp.num_states())))) <= 1e-10);

    for (int k = 0; k < 50; ++k) {
        const Mdp m = random_mdp(rng, 7, 4, k % 2 ? 0.5 : 0.99);
        const TabularPolicy p = random_policy(m.num_states(), m.num_actions(), rng);
        const ShapingFunction f = random_shaping(m.num_states(), rng);
        CHECK(std::abs(visitation_balance_residual(m, p, f)) <= 1e-10);
    }
}

TEST_CASE("reward shaping shifts every return by -E_mu[f]") {
    Rng rng(37);
    const Mdp mdp = random_mdp(rng, 6, 3, 0.9);
    const int n = mdp.num_states();

    // f = 0 leaves the model alone.
    const Mdp same = shaped_mdp(mdp, ShapingFunction::zero(n));
    for (int a = 0; a < mdp.num_actions(); ++a) {
        CHECK((same.reward_for_action(a) - mdp.reward_for_action(a)).cwiseAbs().maxCoeff() ==
              0.0);
    }

    // Constant f = c drops J by c.
    const TabularPolicy pi = random_policy(n, mdp.num_actions(), rng);
    const Mdp shifted = shaped_mdp(mdp, ShapingFunction(Vector::Constant(n, 1.7)));
    CHECK(discounted_return(shifted, pi) ==
          doctest::Approx(discounted_return(mdp, pi) - 1.7).epsilon(1e-9));

    const ShapingFunction f = random_shaping(n, rng);
    const Mdp shaped = shaped_mdp(mdp, f);
    const double shift = mdp.start_dist().dot(f.values);
    std::vector<double> j_original, j_shaped;
    for (int k = 0; k < 10; ++k) {
        const TabularPolicy p = random_policy(n, mdp.num_actions(), rng);
        j_original.push_back(discounted_return(mdp, p));
        j_shaped.push_back(discounted_return(shaped, p));
        CHECK(std::abs(j_shaped.back() - (j_original.back() - shift)) <= 1e-9);
    }
    // Shaping preserves the ordering of policies.
    for (std::size_t i = 0; i + 1 < j_original.size(); ++i) {
        const double lhs = j_shaped[i] - j_shaped[i + 1];
        const double rhs = j_original[i] - j_original[i + 1];
        if (std::abs(rhs) > 1e-7) CHECK(lhs * rhs > 0.0);
    }
}

TEST_CASE("mdp interchange document round-trips and reports bad entries") {
    GarnetSpec spec{4, 2, 2, 0.3, 55};
    const Mdp mdp = generate_garnet(spec, 0.85);
    const std::string path = "test_mdp_roundtrip.json";
    save_mdp(mdp, path);
    const Mdp loaded = load_mdp(path);
    CHECK(loaded.num_states() == mdp.num_states());
    CHECK(loaded.gamma() == mdp.gamma());
    for (int a = 0; a < mdp.num_actions(); ++a) {
        CHECK((loaded.transition_for_action(a) - mdp.transition_for_action(a))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK((loaded.reward_for_action(a) - mdp.reward_for_action(a))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    std::remove(path.c_str());

    nlohmann::json doc = mdp_to_json(mdp);
    doc["transition"][1][0][2] = 0.9;  // break row (s=1, a=0)
    CHECK_THROWS_WITH_AS(mdp_from_json(doc), doctest::Contains("(s=1,a=0)"), LoadError);

    nlohmann::json missing = mdp_to_json(mdp);
    missing.erase("start_dist");
    CHECK_THROWS_AS(mdp_from_json(missing), LoadError);

    CHECK_THROWS_AS(load_mdp("does_not_exist.json"), LoadError);
}
