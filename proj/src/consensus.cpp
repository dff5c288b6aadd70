#include "consensus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace socbal {

GraphTopology::GraphTopology(int node_count, const std::set<std::pair<int, int>>& edges)
    : node_count_(node_count) {
    if (node_count <= 0) {
        throw Error("topology: node_count must be positive");
    }
    neighbors_.assign(node_count, {});
    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : edges) {
        if (a < 0 || a >= node_count || b < 0 || b >= node_count) {
            throw Error("topology: edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") references a node outside [0," + std::to_string(node_count) + ")");
        }
        if (a == b) {
            throw Error("topology: explicit self-loop on node " + std::to_string(a) +
                        " (self-loops are implicit)");
        }
        auto key = std::minmax(a, b);
        if (!seen.insert(key).second) {
            throw Error("topology: duplicate edge (" + std::to_string(key.first) + "," +
                        std::to_string(key.second) + ")");
        }
        neighbors_[a].push_back(b);
        neighbors_[b].push_back(a);
    }
    for (auto& nb : neighbors_) {
        std::sort(nb.begin(), nb.end());
    }

    // Connectivity check: BFS from node 0, report the unreachable component.
    std::vector<char> reached(node_count, 0);
    std::vector<int> queue{0};
    reached[0] = 1;
    while (!queue.empty()) {
        int v = queue.back();
        queue.pop_back();
        for (int u : neighbors_[v]) {
            if (!reached[u]) {
                reached[u] = 1;
                queue.push_back(u);
            }
        }
    }
    std::vector<int> isolated;
    for (int v = 0; v < node_count; ++v) {
        if (!reached[v]) isolated.push_back(v);
    }
    if (!isolated.empty()) {
        std::ostringstream msg;
        msg << "topology: graph is not connected; nodes {";
        for (size_t i = 0; i < isolated.size(); ++i) {
            msg << (i ? "," : "") << isolated[i];
        }
        msg << "} are unreachable from node 0";
        throw Error(msg.str());
    }
}

bool GraphTopology::has_edge(int a, int b) const {
    if (a < 0 || a >= node_count_ || b < 0 || b >= node_count_) return false;
    const auto& nb = neighbors_[a];
    return std::binary_search(nb.begin(), nb.end(), b);
}

WeightMatrix::WeightMatrix(int node_count, std::vector<double> entries)
    : n_(node_count), w_(std::move(entries)) {
    if (n_ <= 0 || w_.size() != static_cast<size_t>(n_) * n_) {
        throw Error("weight matrix: entry count does not match node_count^2");
    }
    for (int i = 0; i < n_; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < n_; ++j) {
            double v = at(i, j);
            if (v < 0.0 || v > 1.0) {
                throw Error("weight matrix: entry out of [0,1] at (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
            }
            if (v != at(j, i)) {
                throw Error("weight matrix: not symmetric at (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
            }
            row_sum += v;
        }
        if (std::abs(row_sum - 1.0) > 1e-12) {
            throw Error("weight matrix: row " + std::to_string(i) + " sums to " +
                        std::to_string(row_sum) + ", expected 1");
        }
    }
}

void ConsensusConfig::validate() const {
    if (!(tolerance > 0.0)) throw Error("consensus: tolerance must be > 0");
    if (max_iterations < 1) throw Error("consensus: max_iterations must be >= 1");
}

WeightMatrix metropolis_weights(const GraphTopology& topology) {
    const int n = topology.node_count();
    std::vector<double> w(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        double off_diag = 0.0;
        for (int j : topology.neighbors(i)) {
            double wij = 1.0 / (std::max(topology.degree(i), topology.degree(j)) + 1.0);
            w[static_cast<size_t>(i) * n + j] = wij;
            off_diag += wij;
        }
        w[static_cast<size_t>(i) * n + i] = 1.0 - off_diag;
    }
    return WeightMatrix(n, std::move(w));
}

std::vector<double> consensus_step(std::span<const double> values, const WeightMatrix& weights) {
    const int n = weights.node_count();
    if (static_cast<int>(values.size()) != n) {
        throw Error("consensus_step: got " + std::to_string(values.size()) +
                    " values for a " + std::to_string(n) + "-node weight matrix");
    }
    std::vector<double> next(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            acc += weights.at(i, j) * values[j];
        }
        next[i] = acc;
    }
    return next;
}

namespace {
double spread(std::span<const double> v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}
} // namespace

ConsensusResult run_consensus(std::span<const double> values, const WeightMatrix& weights,
                              const ConsensusConfig& cfg) {
    cfg.validate();
    const int n = weights.node_count();
    ConsensusResult res;
    res.estimates.assign(values.begin(), values.end());
    if (static_cast<int>(res.estimates.size()) != n) {
        throw Error("run_consensus: value count does not match weight matrix");
    }
    std::vector<double> next(n);
    while (res.iterations < cfg.max_iterations && spread(res.estimates) > cfg.tolerance) {
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += weights.at(i, j) * res.estimates[j];
            next[i] = acc;
        }
        res.estimates.swap(next);
        ++res.iterations;
    }
    res.converged = spread(res.estimates) <= cfg.tolerance;
    return res;
}

void verify_convergence(const WeightMatrix& weights, const ConsensusConfig& cfg) {
    std::vector<double> probe(weights.node_count(), 0.0);
    probe[0] = 1.0;
    ConsensusResult res = run_consensus(probe, weights, cfg);
    if (!res.converged) {
        throw Error("weight matrix failed the consensus probe: spread still above " +
                    std::to_string(cfg.tolerance) + " after " +
                    std::to_string(cfg.max_iterations) + " iterations");
    }
}

} // namespace socbal
