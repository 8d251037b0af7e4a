#pragma once

#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "parl/mdp.hpp"

namespace parl {

using json = nlohmann::json;

// MDP documents: {"n_states", "n_actions", "transition": [x][u][y], "reward": [x][u][y], "mu0"}.
// Large MDPs use "transitions": [[x, u, y, prob, reward], ...] in place of the dense tensors.

inline constexpr std::size_t kDenseExportLimit = 64;

inline json mdp_to_json(const TabularMdp& mdp, bool sparse) {
    const std::size_t n = mdp.n_states();
    const std::size_t m = mdp.n_actions();
    if (sparse) {
        json list = json::array();
        for (std::size_t x = 0; x < n; ++x)
            for (std::size_t u = 0; u < m; ++u)
                for (const auto& t : mdp.row(x, u)) list.push_back({x, u, t.next, t.prob, t.reward});
        return json{{"n_states", n}, {"n_actions", m}, {"transitions", std::move(list)}, {"mu0", mdp.mu0()}};
    }
    std::vector<std::vector<std::vector<double>>> p(n, std::vector<std::vector<double>>(m, std::vector<double>(n, 0.0)));
    auto r = p;
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t u = 0; u < m; ++u)
            for (const auto& t : mdp.row(x, u)) {
                p[x][u][t.next] = t.prob;
                r[x][u][t.next] = t.reward;
            }
    return json{{"n_states", n}, {"n_actions", m}, {"transition", p}, {"reward", r}, {"mu0", mdp.mu0()}};
}

inline json mdp_to_json(const TabularMdp& mdp) { return mdp_to_json(mdp, mdp.n_states() > kDenseExportLimit); }

namespace detail {

inline TabularMdp mdp_from_sparse_json(const json& j, std::size_t n, std::size_t m) {
    std::vector<std::vector<Transition>> rows(n * m);
    for (const auto& e : j.at("transitions")) {
        if (!e.is_array() || e.size() != 5)
            throw std::invalid_argument("each transition must be [x, u, y, prob, reward]");
        const auto x = e[0].get<std::size_t>(), u = e[1].get<std::size_t>(), y = e[2].get<std::size_t>();
        if (x >= n || u >= m || y >= n)
            throw std::invalid_argument(detail::concat("transition (", x, ",", u, ",", y, ") out of range"));
        rows[x * m + u].push_back({y, e[3].get<double>(), e[4].get<double>()});
    }
    return {n, m, std::move(rows), j.at("mu0").get<std::vector<double>>()};
}

}  // namespace detail

inline TabularMdp mdp_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("MDP document must be a JSON object");
    const char* table = j.contains("transitions") ? "transitions" : "transition";
    for (const char* key : {"n_states", "n_actions", table, "mu0"})
        if (!j.contains(key)) throw std::invalid_argument(std::string("MDP document is missing \"") + key + "\"");
    const auto n = j.at("n_states").get<std::size_t>();
    const auto m = j.at("n_actions").get<std::size_t>();
    if (j.contains("transitions")) return detail::mdp_from_sparse_json(j, n, m);
    auto p = j.at("transition").get<std::vector<std::vector<std::vector<double>>>>();
    std::vector<std::vector<std::vector<double>>> r;
    if (j.contains("reward") && !j.at("reward").is_null())
        r = j.at("reward").get<std::vector<std::vector<std::vector<double>>>>();
    if (p.size() != n)
        throw std::invalid_argument(detail::concat("transition has ", p.size(), " states but n_states is ", n));
    for (std::size_t x = 0; x < n; ++x)
        if (p[x].size() != m)
            throw std::invalid_argument(detail::concat("transition[", x, "] has ", p[x].size(),
                                                       " actions but n_actions is ", m));
    return TabularMdp::from_dense(p, r, j.at("mu0").get<std::vector<double>>());
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(indent) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline TabularMdp load_mdp(const std::string& path) { return mdp_from_json(read_json_file(path)); }

inline void save_mdp(const std::string& path, const TabularMdp& mdp) { write_json_file(path, mdp_to_json(mdp)); }

inline json policy_to_json(const StochasticPolicy& p) {
    std::vector<std::vector<double>> rows(p.n_states());
    for (std::size_t x = 0; x < p.n_states(); ++x) rows[x].assign(p.row(x).begin(), p.row(x).end());
    return json{{"n_states", p.n_states()}, {"n_actions", p.n_actions()}, {"probs", rows}};
}

inline StochasticPolicy policy_from_json(const json& j) {
    if (j.contains("actions")) {
        const auto m = j.at("n_actions").get<std::size_t>();
        return DeterministicPolicy(j.at("actions").get<std::vector<std::size_t>>(), m).to_stochastic();
    }
    const auto rows = j.at("probs").get<std::vector<std::vector<double>>>();
    const auto n = j.at("n_states").get<std::size_t>();
    const auto m = j.at("n_actions").get<std::size_t>();
    if (rows.size() != n) throw std::invalid_argument(detail::concat("policy has ", rows.size(), " rows, expected ", n));
    std::vector<double> flat;
    flat.reserve(n * m);
    for (std::size_t x = 0; x < n; ++x) {
        if (rows[x].size() != m)
            throw std::invalid_argument(detail::concat("policy row ", x, " has ", rows[x].size(), " entries, expected ", m));
        flat.insert(flat.end(), rows[x].begin(), rows[x].end());
    }
    return {n, m, std::move(flat)};
}

inline json policy_to_json(const DeterministicPolicy& p) {
    return json{{"n_states", p.n_states()}, {"n_actions", p.n_actions()}, {"actions", p.actions()}};
}

}  // namespace parl
