#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace socbal {

/// Undirected communication graph over node ids [0, node_count).
/// Self-loops are implicit (a node always sees its own state) and must not
/// appear in the explicit edge set. Construction requires a connected graph.
class GraphTopology {
public:
    GraphTopology(int node_count, const std::set<std::pair<int, int>>& edges);

    int node_count() const { return node_count_; }
    int degree(int node) const { return static_cast<int>(neighbors_[node].size()); }
    /// Neighbor ids in ascending order, excluding the node itself.
    const std::vector<int>& neighbors(int node) const { return neighbors_[node]; }
    bool has_edge(int a, int b) const;

private:
    int node_count_ = 0;
    std::vector<std::vector<int>> neighbors_;
};

/// Symmetric, row-stochastic averaging matrix. Entries are zero off the
/// topology's edges; every row sums to 1 within 1e-12.
class WeightMatrix {
public:
    WeightMatrix(int node_count, std::vector<double> entries);

    int node_count() const { return n_; }
    double at(int i, int j) const { return w_[static_cast<size_t>(i) * n_ + j]; }

private:
    int n_ = 0;
    std::vector<double> w_; // row-major n x n
};

struct ConsensusConfig {
    double tolerance = 1e-6;  // max spread (max - min) at termination
    int max_iterations = 500;

    void validate() const;
};

struct ConsensusResult {
    std::vector<double> estimates; // per-node estimate of the initial mean
    int iterations = 0;
    bool converged = false;
};

/// Metropolis-Hastings weights: w_ij = 1/(max{d_i,d_j}+1) on edges,
/// w_ii = 1 - sum of the row's off-diagonal weights, 0 elsewhere.
WeightMatrix metropolis_weights(const GraphTopology& topology);

/// One synchronous averaging round: returns W*x. Preserves the vector sum.
std::vector<double> consensus_step(std::span<const double> values, const WeightMatrix& weights);

/// Iterates consensus_step until the spread of the estimates falls below
/// cfg.tolerance or cfg.max_iterations is hit (converged=false in that case).
/// Because the mean is preserved every round and lies inside [min, max],
/// a spread <= tolerance bounds every node's error to the true mean.
ConsensusResult run_consensus(std::span<const double> values, const WeightMatrix& weights,
                              const ConsensusConfig& cfg);

/// Startup probe: runs one consensus on a basis vector and throws if it does
/// not contract to the mean. Catches misconfigured custom weight matrices
/// without computing eigenvalues.
void verify_convergence(const WeightMatrix& weights, const ConsensusConfig& cfg);

} // namespace socbal
