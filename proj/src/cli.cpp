#include "empilab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "empilab/bounds.hpp"
#include "empilab/empi.hpp"
#include "empilab/garnet.hpp"
#include "empilab/mdp.hpp"
#include "empilab/mdp_io.hpp"
#include "empilab/rng.hpp"
#include "empilab/sampler.hpp"

namespace empilab {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Random policy with every entry bounded away from zero, so importance
/// ratios stay finite and KL divergences are defined in both directions.
TabularPolicy random_positive_policy(int num_states, int num_actions, Rng& rng) {
    Matrix probs(num_states, num_actions);
    for (int s = 0; s < num_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < num_actions; ++a) {
            probs(s, a) = 0.05 + rng.uniform();
            sum += probs(s, a);
        }
        probs.row(s) /= sum;
    }
    return TabularPolicy(std::move(probs));
}

TabularPolicy mix_policies(const TabularPolicy& base, const TabularPolicy& other,
                           double lambda) {
    return TabularPolicy((1.0 - lambda) * base.probs() + lambda * other.probs());
}

/// E_{s~d}[sqrt(KL(s)/2)], the middle link of the Pinsker-Jensen chain.
double avg_sqrt_half_kl(const Mdp& mdp, const TabularPolicy& old_policy,
                        const TabularPolicy& new_policy) {
    const Visitation d = discounted_visitation(mdp, old_policy);
    double total = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) {
        double kl = 0.0;
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double p = old_policy.prob(s, a);
            if (p == 0.0) continue;
            kl += p * std::log(p / new_policy.prob(s, a));
        }
        total += d.dist(s) * std::sqrt(0.5 * std::max(kl, 0.0));
    }
    return total;
}

struct InstanceOptions {
    int states = 6;
    int actions = 4;
    int branching = 3;
    double gamma = 0.9;
    double sparsity = 0.0;
    std::string mdp_file;
};

void add_instance_flags(CLI::App* cmd, InstanceOptions* opts, bool sweep_gamma_default) {
    cmd->add_option("--states", opts->states, "Garnet state count");
    cmd->add_option("--actions", opts->actions, "Garnet action count");
    cmd->add_option("--branching", opts->branching, "successors per (s,a)");
    if (sweep_gamma_default) {
        opts->gamma = -1.0;
        cmd->add_option("--gamma", opts->gamma,
                        "discount factor; negative sweeps {0.5, 0.9, 0.95, 0.99}");
    } else {
        cmd->add_option("--gamma", opts->gamma, "discount factor");
    }
    cmd->add_option("--mdp-file", opts->mdp_file, "load this MDP instead of generating");
}

Mdp make_instance(const InstanceOptions& opts, double gamma, std::uint64_t seed) {
    if (!opts.mdp_file.empty()) return load_mdp(opts.mdp_file);
    GarnetSpec spec;
    spec.num_states = opts.states;
    spec.num_actions = opts.actions;
    spec.branching = std::min(opts.branching, opts.states);
    spec.reward_sparsity = opts.sparsity;
    spec.seed = seed;
    return generate_garnet(spec, gamma);
}

double pick_gamma(double flag_value, Rng& rng) {
    static constexpr double kSweep[] = {0.5, 0.9, 0.95, 0.99};
    if (flag_value >= 0.0) return flag_value;
    return kSweep[rng.uniform_int(4)];
}

std::ofstream open_report(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open report file: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// verify-bounds

struct VerifyBoundsOptions {
    InstanceOptions instance;
    int trials = 100;
    std::uint64_t seed = 0;
    std::string out = "verify_bounds.csv";
    double penalty_scale = 1.0;  // test hook; != 1 must be caught as violations
};

int cmd_verify_bounds(const VerifyBoundsOptions& opts) {
    static constexpr BoundVariant kCycle[] = {
        BoundVariant::ExactVisitationTv, BoundVariant::AvgPolicyTv,
        BoundVariant::AdvantageForm, BoundVariant::EstimatorAware, BoundVariant::KlPinsker};
    static constexpr double kLambdas[] = {0.01, 0.1, 0.5, 1.0};
    static constexpr double kNoise[] = {0.0, 0.05, 0.2};

    std::ofstream csv = open_report(opts.out);
    csv << "trial,seed,states,actions,branching,gamma,lambda,"
        << bound_csv_header() << ",violation\n";

    const BoundOptions bound_options{opts.penalty_scale};
    int violations = 0;
    for (int trial = 0; trial < opts.trials; ++trial) {
        Rng rng(substream_seed(opts.seed, 2 * trial));
        const double gamma = pick_gamma(opts.instance.gamma, rng);
        const Mdp mdp = make_instance(opts.instance, gamma, substream_seed(opts.seed, 2 * trial + 1));

        const TabularPolicy pi = random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
        const TabularPolicy rho = random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
        const double lambda = kLambdas[trial % 4];
        const TabularPolicy pi_new = mix_policies(pi, rho, lambda);

        // Shaping function: near the old values, the new values (exactness
        // case), or unrelated to either.
        ShapingFunction f = [&] {
            switch (trial % 3) {
                case 0: {
                    Vector v = value_functions(mdp, pi).v;
                    for (int s = 0; s < mdp.num_states(); ++s) v(s) += rng.uniform(-0.5, 0.5);
                    return ShapingFunction(std::move(v));
                }
                case 1:
                    return ShapingFunction(value_functions(mdp, pi_new).v);
                default: {
                    Vector v(mdp.num_states());
                    for (int s = 0; s < mdp.num_states(); ++s) v(s) = rng.uniform(-2.0, 2.0);
                    return ShapingFunction(std::move(v));
                }
            }
        }();

        const BoundVariant variant = kCycle[trial % 5];
        std::optional<AdvantageEstimate> estimate;
        if (variant == BoundVariant::EstimatorAware) {
            estimate = corrupt_value_estimator(mdp, pi, kNoise[(trial / 5) % 3],
                                               substream_seed(opts.seed, 1000000 + trial));
        }

        const BoundReport report =
            improvement_bound(mdp, pi, pi_new, f, variant, estimate, bound_options);

        bool violation = false;
        auto fail = [&](const std::string& what) {
            violation = true;
            std::cerr << "violation at trial " << trial << ": " << what << "\n";
        };

        if (report.rhs > report.true_improvement + 1e-8) {
            fail("rhs " + format_double(report.rhs) + " exceeds improvement " +
                 format_double(report.true_improvement) + " [" + to_string(variant) + "]");
        }

        // Tightness at pi' = pi for the trial's variant.
        const BoundReport tight =
            improvement_bound(mdp, pi, pi, f, variant, estimate, bound_options);
        if (std::abs(tight.rhs) > 1e-12 || std::abs(tight.true_improvement) > 1e-12) {
            fail("bound not tight at pi' = pi");
        }

        // The exact-visitation penalty never undershoots the averaged one.
        const BoundReport evt = improvement_bound(mdp, pi, pi_new, f,
                                                  BoundVariant::ExactVisitationTv, {},
                                                  bound_options);
        const BoundReport apt =
            improvement_bound(mdp, pi, pi_new, f, BoundVariant::AvgPolicyTv, {}, bound_options);
        if (evt.rhs < apt.rhs - 1e-10) {
            fail("exact-visitation rhs below averaged rhs");
        }

        // Pinsker-Jensen chain on this strictly positive pair.
        const double middle = avg_sqrt_half_kl(mdp, pi, pi_new);
        if (report.tv_avg > middle + 1e-12 ||
            middle > std::sqrt(0.5 * report.kl_avg) + 1e-12) {
            fail("Pinsker chain out of order");
        }

        // With f matched to the new policy's values, AvgPolicyTv is exact.
        if (trial % 3 == 1) {
            if (std::abs(apt.rhs - apt.true_improvement) > 1e-9) {
                fail("f = V' exactness off by " +
                     format_double(apt.rhs - apt.true_improvement));
            }
        }

        violations += violation ? 1 : 0;
        csv << trial << ',' << opts.seed << ',' << mdp.num_states() << ',' << mdp.num_actions()
            << ',' << opts.instance.branching << ',' << format_double(gamma) << ','
            << format_double(lambda) << ',' << bound_csv_row(report) << ','
            << (violation ? "true" : "false") << '\n';
    }

    std::cout << "verify-bounds: " << opts.trials << " trials, " << violations
              << " violations -> " << opts.out << "\n";
    return violations == 0 ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------
// run-empi

struct RunEmpiOptions {
    InstanceOptions instance;
    int iters = 50;
    double alpha = 1e-8;
    double noise = 0.0;
    double floor = 1e-6;
    std::uint64_t seed = 0;
    std::string out = "empi_run.csv";
};

int cmd_run_empi(const RunEmpiOptions& opts) {
    const Mdp mdp = make_instance(opts.instance, opts.instance.gamma, opts.seed);

    EmpiConfig config;
    config.max_iters = opts.iters;
    config.stop_tol = opts.alpha;
    config.floor = opts.floor;
    EstimatorFn estimator;
    if (opts.noise > 0.0) {
        config.shaping_mode = ShapingMode::Estimated;
        estimator = [&](const Mdp& m, const TabularPolicy& p, int iter) {
            return corrupt_value_estimator(m, p, opts.noise,
                                           substream_seed(opts.seed, 500000 + iter));
        };
    }

    const TabularPolicy initial =
        TabularPolicy::uniform(mdp.num_states(), mdp.num_actions());
    const EmpiRun run = run_empi(mdp, initial, config, {}, estimator);

    std::ofstream csv = open_report(opts.out);
    csv << iteration_csv_header() << '\n';
    bool monotone = true;
    for (const IterationRecord& record : run.records) {
        csv << iteration_csv_row(record) << '\n';
        monotone = monotone && record.j_after >= record.j_before - 1e-9;
    }

    nlohmann::json summary{
        {"mode", opts.noise > 0.0 ? "estimated" : "exact"},
        {"iterations", run.records.size()},
        {"j_initial", run.records.front().j_before},
        {"j_final", run.records.back().j_after},
        {"monotone", monotone},
        {"epsilon_source", "exact"},
        {"epsilon_certified", true},
        {"report", opts.out},
    };
    if (opts.noise > 0.0) {
        // Report-only alternatives for the penalty scale in sample settings.
        summary["worst_case_epsilon"] = worst_case_epsilon(mdp);
        const AdvantageEstimate final_estimate = corrupt_value_estimator(
            mdp, run.final_policy, opts.noise, substream_seed(opts.seed, 999999));
        summary["heuristic_epsilon_table_max"] = final_estimate.a_hat.cwiseAbs().maxCoeff();
        summary["heuristic_epsilon_certified"] = false;
    }
    std::cout << summary.dump(2) << "\n";
    return monotone ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------
// trpo-check

struct TrpoCheckOptions {
    InstanceOptions instance;
    int mdps = 5;
    int trials = 100;  // accepted candidates per (mdp, delta)
    double delta = 0.01;
    std::uint64_t seed = 0;
    std::string out = "trpo_check.csv";
};

int cmd_trpo_check(const TrpoCheckOptions& opts) {
    std::ofstream csv = open_report(opts.out);
    csv << "mdp,accepted,delta,kl_avg,improvement,bound,violation\n";

    int violations = 0;
    for (int m = 0; m < opts.mdps; ++m) {
        Rng rng(substream_seed(opts.seed, m));
        const double gamma = pick_gamma(opts.instance.gamma, rng);
        const Mdp mdp = make_instance(opts.instance, gamma, substream_seed(opts.seed, 777 + m));
        const TabularPolicy pi = random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
        const ValueFunctions vf = value_functions(mdp, pi);

        const Visitation d = discounted_visitation(mdp, pi);
        double lambda_cap = std::min(1.0, 4.0 * std::sqrt(opts.delta));
        int accepted = 0;
        int attempts = 0;
        const int max_attempts = 200 * opts.trials + 200;
        while (accepted < opts.trials && attempts < max_attempts) {
            ++attempts;
            const TabularPolicy rho =
                random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
            const double lambda = rng.uniform() * lambda_cap;
            const TabularPolicy candidate = mix_policies(pi, rho, lambda);
            const DivergenceProfile divergences = divergence_profile(mdp, pi, candidate);
            if (!divergences.kl_support_ok || divergences.kl_avg > opts.delta) {
                lambda_cap *= 0.7;  // shrink toward the trust region and retry
                continue;
            }
            // A trust-region update never moves to a candidate scoring below
            // the incumbent's surrogate value of 0; the worst-case bound is
            // about those updates, so candidates need the same certificate.
            const double surrogate_advantage =
                d.dist.dot((candidate.probs().array() * vf.adv.array()).rowwise().sum().matrix());
            if (surrogate_advantage < 0.0) continue;
            ++accepted;
            const double bound = trpo_worst_case(mdp, pi, candidate, opts.delta);
            const double improvement = value_functions(mdp, candidate).ret - vf.ret;
            const bool violation = improvement < bound - 1e-9;
            violations += violation ? 1 : 0;
            csv << m << ',' << accepted << ',' << format_double(opts.delta) << ','
                << format_double(divergences.kl_avg) << ',' << format_double(improvement) << ','
                << format_double(bound) << ',' << (violation ? "true" : "false") << '\n';
            if (violation) {
                std::cerr << "violation: mdp " << m << " improvement "
                          << format_double(improvement) << " below bound "
                          << format_double(bound) << "\n";
            }
        }
        if (accepted < opts.trials) {
            std::cerr << "trpo-check: only " << accepted << "/" << opts.trials
                      << " candidates accepted for mdp " << m << "\n";
            return kExitUsage;
        }
    }
    std::cout << "trpo-check: " << opts.mdps << " MDPs x " << opts.trials << " candidates, "
              << violations << " violations -> " << opts.out << "\n";
    return violations == 0 ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
    InstanceOptions instance;
    int n = 20000;
    int seeds = 10;
    double noise = 0.05;
    std::uint64_t seed = 0;
    std::string out = "estimate.csv";
};

int cmd_estimate(const EstimateOptions& opts) {
    const Mdp mdp = make_instance(opts.instance, opts.instance.gamma, opts.seed);
    Rng rng(substream_seed(opts.seed, 42));
    const TabularPolicy pi = random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
    const TabularPolicy rho = random_positive_policy(mdp.num_states(), mdp.num_actions(), rng);
    const TabularPolicy pi_new = mix_policies(pi, rho, 0.3);

    const AdvantageEstimate estimate =
        corrupt_value_estimator(mdp, pi, opts.noise, substream_seed(opts.seed, 43));
    const ValueFunctions vf = value_functions(mdp, pi);
    const double eps = vf.adv.cwiseAbs().maxCoeff();
    const Vector penalty =
        2.0 * (estimate.c_per_state.array() + mdp.gamma() * eps / (1.0 - mdp.gamma()));

    // Exact comparators.
    const double j_exact = vf.ret;
    const Visitation d = discounted_visitation(mdp, pi);
    double objective_exact = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) {
        const double tv =
            0.5 * (pi_new.probs().row(s) - pi.probs().row(s)).cwiseAbs().sum();
        objective_exact += d.dist(s) * (pi_new.probs().row(s).dot(estimate.a_hat.row(s)) -
                                        penalty(s) * tv);
    }
    objective_exact /= (1.0 - mdp.gamma());

    const int horizon = default_horizon(mdp, 1e-3);
    std::ofstream csv = open_report(opts.out);
    csv << "kind,seed_index," << sample_csv_header() << ",exact,abs_error,envelope,ok\n";

    int failures = 0;
    for (int k = 0; k < opts.seeds; ++k) {
        const std::uint64_t run_seed = substream_seed(opts.seed, 100 + k);
        for (const auto& [kind, est, exact] :
             {std::tuple{"return", mc_return(mdp, pi, opts.n, horizon, run_seed), j_exact},
              std::tuple{"objective",
                         mc_objective(mdp, pi, pi_new, estimate, penalty, opts.n, horizon,
                                      substream_seed(opts.seed, 5000 + k)),
                         objective_exact}}) {
            const double err = std::abs(est.mean - exact);
            const double envelope = 4.0 * est.std_error + est.truncation_bound;
            const bool ok = err <= envelope;
            failures += ok ? 0 : 1;
            csv << kind << ',' << k << ',' << sample_csv_row(est) << ','
                << format_double(exact) << ',' << format_double(err) << ','
                << format_double(envelope) << ',' << (ok ? "true" : "false") << '\n';
        }
    }

    std::cout << "estimate: horizon " << horizon << ", worst-case eps "
              << format_double(worst_case_epsilon(mdp)) << " (certified), table-max eps "
              << format_double(estimate.a_hat.cwiseAbs().maxCoeff())
              << " (heuristic, not certified), " << failures << " failures -> " << opts.out
              << "\n";
    return failures == 0 ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------
// gen-mdp

struct GenMdpOptions {
    InstanceOptions instance;
    std::uint64_t seed = 0;
    std::string out = "mdp.json";
};

int cmd_gen_mdp(const GenMdpOptions& opts) {
    GarnetSpec spec;
    spec.num_states = opts.instance.states;
    spec.num_actions = opts.instance.actions;
    spec.branching = std::min(opts.instance.branching, opts.instance.states);
    spec.reward_sparsity = opts.instance.sparsity;
    spec.seed = opts.seed;
    const Mdp mdp = generate_garnet(spec, opts.instance.gamma);
    save_mdp(mdp, opts.out);
    std::cout << "gen-mdp: wrote " << mdp.num_states() << "x" << mdp.num_actions()
              << " instance to " << opts.out << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Exact policy-improvement laboratory for finite MDPs"};
    app.require_subcommand(1);

    VerifyBoundsOptions verify_opts;
    CLI::App* verify = app.add_subcommand(
        "verify-bounds", "randomized validity / tightness / ordering / Pinsker campaigns");
    add_instance_flags(verify, &verify_opts.instance, /*sweep_gamma_default=*/true);
    verify->add_option("--trials", verify_opts.trials, "number of random instances");
    verify->add_option("--seed", verify_opts.seed, "campaign seed");
    verify->add_option("--out", verify_opts.out, "CSV report path");
    verify->add_option("--debug-penalty-scale", verify_opts.penalty_scale,
                       "test hook: scale the divergence penalty (breaks the bounds)")
        ->group("");  // hidden

    RunEmpiOptions empi_opts;
    CLI::App* empi = app.add_subcommand("run-empi", "run the monotonic iteration");
    add_instance_flags(empi, &empi_opts.instance, /*sweep_gamma_default=*/false);
    empi->add_option("--iters", empi_opts.iters, "max iterations");
    empi->add_option("--alpha", empi_opts.alpha, "stopping tolerance on J improvement");
    empi->add_option("--noise", empi_opts.noise,
                     "value-table corruption scale; > 0 switches to estimated mode");
    empi->add_option("--floor", empi_opts.floor, "minimum action probability");
    empi->add_option("--seed", empi_opts.seed, "instance / estimator seed");
    empi->add_option("--out", empi_opts.out, "CSV report path");

    TrpoCheckOptions trpo_opts;
    CLI::App* trpo = app.add_subcommand(
        "trpo-check", "rejection-sample inside the KL ball and check the worst case");
    add_instance_flags(trpo, &trpo_opts.instance, /*sweep_gamma_default=*/true);
    trpo->add_option("--mdps", trpo_opts.mdps, "number of random MDPs");
    trpo->add_option("--trials", trpo_opts.trials, "accepted candidates per MDP");
    trpo->add_option("--delta", trpo_opts.delta, "trust-region radius");
    trpo->add_option("--seed", trpo_opts.seed, "campaign seed");
    trpo->add_option("--out", trpo_opts.out, "CSV report path");

    EstimateOptions est_opts;
    CLI::App* estimate =
        app.add_subcommand("estimate", "Monte-Carlo vs exact agreement tables");
    add_instance_flags(estimate, &est_opts.instance, /*sweep_gamma_default=*/false);
    estimate->add_option("--n", est_opts.n, "trajectories per estimate");
    estimate->add_option("--seeds", est_opts.seeds, "seeded repeats");
    estimate->add_option("--noise", est_opts.noise, "estimator corruption scale");
    estimate->add_option("--seed", est_opts.seed, "base seed");
    estimate->add_option("--out", est_opts.out, "CSV report path");

    GenMdpOptions gen_opts;
    CLI::App* gen = app.add_subcommand("gen-mdp", "write a Garnet instance to a file");
    add_instance_flags(gen, &gen_opts.instance, /*sweep_gamma_default=*/false);
    gen->add_option("--seed", gen_opts.seed, "generator seed");
    gen->add_option("--out", gen_opts.out, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (verify->parsed()) return cmd_verify_bounds(verify_opts);
        if (empi->parsed()) return cmd_run_empi(empi_opts);
        if (trpo->parsed()) return cmd_trpo_check(trpo_opts);
        if (estimate->parsed()) return cmd_estimate(est_opts);
        if (gen->parsed()) return cmd_gen_mdp(gen_opts);
    } catch (const LoadError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitViolation;
    }
    return kExitUsage;
}

}  // namespace empilab
