#pragma once

#include "grasp/graph.hpp"
#include "grasp/ingest.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

namespace support {

inline grasp::BipartiteGraph random_bipartite(std::mt19937_64& rng, std::size_t max_nodes = 30) {
    std::uniform_int_distribution<std::size_t> size(1, max_nodes - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    grasp::BipartiteGraph g;
    const std::size_t n = std::max<std::size_t>(2, size(rng) + 1);
    g.n_users = 1 + size(rng) % (n - 1);
    g.n_items = n - g.n_users;
    g.adjacency.assign(n, {});
    const double p = 0.03 + 0.3 * unit(rng);
    for (std::size_t u = 0; u < g.n_users; ++u) {
        for (std::size_t i = 0; i < g.n_items; ++i) {
            if (unit(rng) < p) {
                g.adjacency[u].push_back(g.item_node(i));
                g.adjacency[static_cast<std::size_t>(g.item_node(i))].push_back(static_cast<std::int32_t>(u));
            }
        }
    }
    for (auto& adj : g.adjacency) {
        std::sort(adj.begin(), adj.end());
    }
    return g;
}

/// All-pairs hop counts by Floyd-Warshall; -1 for unreachable pairs.
inline std::vector<std::vector<int>> floyd_warshall(const grasp::BipartiteGraph& g) {
    const std::size_t n = g.n_nodes();
    constexpr int inf = std::numeric_limits<int>::max() / 4;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
    for (std::size_t a = 0; a < n; ++a) {
        d[a][a] = 0;
        for (auto b : g.adjacency[a]) {
            d[a][static_cast<std::size_t>(b)] = 1;
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
            }
        }
    }
    for (auto& row : d) {
        for (auto& v : row) {
            if (v >= inf) {
                v = -1;
            }
        }
    }
    return d;
}

inline grasp::InteractionRecord record(const std::string& user, const std::string& item, int rating,
                                       std::optional<std::int64_t> ts = std::nullopt,
                                       std::optional<std::string> review = std::nullopt) {
    grasp::InteractionRecord r;
    r.user_id = user;
    r.item_id = item;
    r.rating = rating;
    r.timestamp = ts;
    r.review_text = std::move(review);
    return r;
}

/// Small planted-community dataset shared by several suites.
inline grasp::Dataset synthetic(std::uint64_t seed = 7) {
    grasp::SyntheticSpec spec;
    spec.seed = seed;
    return grasp::generate_synthetic(spec).dataset;
}

}  // namespace support
