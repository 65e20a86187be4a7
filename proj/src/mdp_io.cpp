#include "empilab/mdp_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace empilab {

namespace {

using nlohmann::json;

const json& require_field(const json& doc, const char* name) {
    const auto it = doc.find(name);
    if (it == doc.end()) {
        throw LoadError(std::string("mdp document: missing field '") + name + "'");
    }
    return *it;
}

double number_at(const json& node, const std::string& where) {
    if (!node.is_number()) {
        throw LoadError("mdp document: non-numeric entry at " + where);
    }
    return node.get<double>();
}

}  // namespace

json mdp_to_json(const Mdp& mdp) {
    const int n = mdp.num_states();
    const int num_actions = mdp.num_actions();
    json transition = json::array();
    json reward = json::array();
    for (int s = 0; s < n; ++s) {
        json t_s = json::array();
        json r_s = json::array();
        for (int a = 0; a < num_actions; ++a) {
            json t_sa = json::array();
            json r_sa = json::array();
            for (int sp = 0; sp < n; ++sp) {
                t_sa.push_back(mdp.transition(s, a, sp));
                r_sa.push_back(mdp.reward(s, a, sp));
            }
            t_s.push_back(std::move(t_sa));
            r_s.push_back(std::move(r_sa));
        }
        transition.push_back(std::move(t_s));
        reward.push_back(std::move(r_s));
    }
    json start = json::array();
    for (int s = 0; s < n; ++s) start.push_back(mdp.start_dist()(s));

    return json{{"num_states", n},
                {"num_actions", num_actions},
                {"gamma", mdp.gamma()},
                {"start_dist", std::move(start)},
                {"transition", std::move(transition)},
                {"reward", std::move(reward)}};
}

Mdp mdp_from_json(const json& doc) {
    const int n = require_field(doc, "num_states").get<int>();
    const int num_actions = require_field(doc, "num_actions").get<int>();
    const double gamma = require_field(doc, "gamma").get<double>();
    if (n < 1 || num_actions < 1) {
        throw LoadError("mdp document: num_states and num_actions must be positive");
    }

    const json& start_node = require_field(doc, "start_dist");
    if (!start_node.is_array() || static_cast<int>(start_node.size()) != n) {
        throw LoadError("mdp document: start_dist must be an array of length num_states");
    }
    Vector start(n);
    for (int s = 0; s < n; ++s) {
        start(s) = number_at(start_node[s], "start_dist[" + std::to_string(s) + "]");
    }

    const json& t_node = require_field(doc, "transition");
    const json& r_node = require_field(doc, "reward");
    std::vector<Matrix> transition(num_actions, Matrix::Zero(n, n));
    std::vector<Matrix> reward(num_actions, Matrix::Zero(n, n));
    for (const auto& [name, node, target] :
         {std::tuple<const char*, const json*, std::vector<Matrix>*>{"transition", &t_node,
                                                                     &transition},
          std::tuple<const char*, const json*, std::vector<Matrix>*>{"reward", &r_node,
                                                                     &reward}}) {
        if (!node->is_array() || static_cast<int>(node->size()) != n) {
            throw LoadError(std::string("mdp document: ") + name +
                            " must be a [num_states][num_actions][num_states] array");
        }
        for (int s = 0; s < n; ++s) {
            const json& by_action = (*node)[s];
            if (!by_action.is_array() || static_cast<int>(by_action.size()) != num_actions) {
                throw LoadError(std::string("mdp document: ") + name + "[" + std::to_string(s) +
                                "] must have num_actions rows");
            }
            for (int a = 0; a < num_actions; ++a) {
                const json& row = by_action[a];
                if (!row.is_array() || static_cast<int>(row.size()) != n) {
                    throw LoadError(std::string("mdp document: ") + name + "[" +
                                    std::to_string(s) + "][" + std::to_string(a) +
                                    "] must have num_states entries");
                }
                for (int sp = 0; sp < n; ++sp) {
                    (*target)[a](s, sp) =
                        number_at(row[sp], std::string(name) + "[" + std::to_string(s) + "][" +
                                               std::to_string(a) + "][" + std::to_string(sp) + "]");
                }
            }
        }
    }

    try {
        return Mdp(std::move(transition), std::move(reward), std::move(start), gamma);
    } catch (const std::invalid_argument& e) {
        throw LoadError(std::string("mdp document: ") + e.what());
    }
}

Mdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open MDP file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw LoadError("cannot parse MDP file " + path + ": " + e.what());
    }
    return mdp_from_json(doc);
}

void save_mdp(const Mdp& mdp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open output file: " + path);
    out << mdp_to_json(mdp).dump(2) << '\n';
}

}  // namespace empilab
