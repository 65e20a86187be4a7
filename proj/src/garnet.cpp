#include "empilab/garnet.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "empilab/rng.hpp"

namespace empilab {

Mdp generate_garnet(const GarnetSpec& spec, double gamma) {
    if (spec.num_states < 1 || spec.num_actions < 1) {
        throw ValidationError("generate_garnet: need at least one state and action");
    }
    if (spec.branching < 1 || spec.branching > spec.num_states) {
        throw ValidationError("generate_garnet: branching must lie in [1, num_states]");
    }
    if (!(spec.reward_sparsity >= 0.0 && spec.reward_sparsity <= 1.0)) {
        throw ValidationError("generate_garnet: reward_sparsity must lie in [0, 1]");
    }

    const int n = spec.num_states;
    const int b = spec.branching;
    Rng rng(spec.seed);

    std::vector<Matrix> transition(spec.num_actions, Matrix::Zero(n, n));
    std::vector<Matrix> reward(spec.num_actions, Matrix::Zero(n, n));

    std::vector<int> successors(n);
    std::vector<double> cut(b + 1);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < spec.num_actions; ++a) {
            // b distinct successors by partial Fisher-Yates.
            std::iota(successors.begin(), successors.end(), 0);
            for (int k = 0; k < b; ++k) {
                const int j = k + rng.uniform_int(n - k);
                std::swap(successors[k], successors[j]);
            }
            // Probabilities from a sorted random cut of [0, 1].
            cut[0] = 0.0;
            cut[b] = 1.0;
            for (int k = 1; k < b; ++k) cut[k] = rng.uniform();
            std::sort(cut.begin() + 1, cut.begin() + b);

            for (int k = 0; k < b; ++k) {
                const int sp = successors[k];
                transition[a](s, sp) = cut[k + 1] - cut[k];
                const double drop = rng.uniform();
                const double r = rng.uniform(-1.0, 1.0);
                reward[a](s, sp) = drop < spec.reward_sparsity ? 0.0 : r;
            }
        }
    }

    const Vector start = Vector::Constant(n, 1.0 / n);
    return Mdp(std::move(transition), std::move(reward), start, gamma);
}

}  // namespace empilab
