#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "empilab/mdp.hpp"

namespace empilab {

/// MDP interchange document:
/// {
///   "num_states": S, "num_actions": A, "gamma": g,
///   "start_dist": [S], "transition": [S][A][S], "reward": [S][A][S]
/// }
/// Probabilities are validated on load at the construction tolerance;
/// violations raise LoadError naming the offending index.
nlohmann::json mdp_to_json(const Mdp& mdp);
Mdp mdp_from_json(const nlohmann::json& doc);

Mdp load_mdp(const std::string& path);
void save_mdp(const Mdp& mdp, const std::string& path);

}  // namespace empilab
