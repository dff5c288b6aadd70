#pragma once

#include <random>
#include <set>
#include <utility>
#include <vector>

#include "config.hpp"
#include "consensus.hpp"
#include "environment.hpp"

namespace test_helpers {

// Spanning tree plus random extra edges; always connected.
inline socbal::GraphTopology random_connected_topology(int n, std::mt19937_64& rng) {
    std::set<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> pick(0, i - 1);
        int j = pick(rng);
        edges.insert(std::minmax(i, j));
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            if (u(rng) < 0.3) edges.insert({a, b});
        }
    }
    return socbal::GraphTopology(n, edges);
}

inline socbal::GraphTopology paper_topology() {
    return socbal::GraphTopology(5, {{0, 1}, {0, 3}, {0, 4}, {1, 2}, {2, 3}, {2, 4}});
}

// The five-unit table built into the default configuration.
inline std::vector<socbal::EsuParams> default_units() {
    return socbal::default_config().units;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace test_helpers
