#pragma once

#include <cstdint>

#include "empilab/mdp.hpp"

namespace empilab {

/// Parameters of a random Garnet instance: every (s,a) reaches exactly
/// `branching` successor states with probabilities from a normalized random
/// cut; rewards are uniform on [-1, 1] and zeroed with probability
/// `reward_sparsity`; the start distribution is uniform.
struct GarnetSpec {
    int num_states = 5;
    int num_actions = 3;
    int branching = 2;
    double reward_sparsity = 0.0;
    std::uint64_t seed = 0;
};

/// Deterministic in the spec (same spec, same MDP). The discount is not
/// part of the structural family, so it is passed alongside.
Mdp generate_garnet(const GarnetSpec& spec, double gamma);

}  // namespace empilab
