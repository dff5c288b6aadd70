#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "consensus.hpp"
#include "environment.hpp"

namespace socbal {

enum class DragMode { Counterfactual, Factual };

struct CdbConfig {
    double epsilon_kw = 0.01; // mean-mismatch threshold
    double delta_p_kw = 0.5;  // minimum update magnitude
    int max_rounds = 1000;
    DragMode drag_mode = DragMode::Counterfactual;

    void validate() const;
};

struct BalanceOutcome {
    std::vector<double> final_powers_kw;
    int rounds_used = 0;
    bool converged = false;
    double residual_mean_kw = 0.0; // final estimated mean of (demand - power)
};

/// Per-round hook for tests and residual tracing. Called after every round
/// (and once for round 0, right after the entry drag).
using BalanceObserver =
    std::function<void(int round, std::span<const double> powers_kw, double residual_mean_kw)>;

/// Deterministic core of the counterfactual drag, with the uniform draw
/// supplied by the caller: an under-bound proposal maps to n2*upper, an
/// over-bound one to n2*lower, in-range proposals pass through.
double drag_counterfactual_with(double proposed_kw, double lower_kw, double upper_kw, double n2);

/// Counterfactual drag with n2 ~ U(0,1) drawn from rng (only when dragging).
double drag_counterfactual(double proposed_kw, double lower_kw, double upper_kw,
                           std::mt19937_64& rng);

/// Ablation variant: clamp to the nearest bound. Idempotent.
double drag_factual(double proposed_kw, double lower_kw, double upper_kw);

/// Iterative demand balancing: each round every agent nudges its power toward
/// the consensus-estimated mean mismatch and drags the result into its bounds,
/// until the estimated mismatch falls below epsilon or max_rounds is hit.
/// rngs supplies one independent stream per agent (n1/n2 draws stay local).
BalanceOutcome balance(std::span<const double> initial_powers_kw,
                       std::span<const double> local_demands_kw,
                       std::span<const std::pair<double, double>> per_unit_bounds,
                       const WeightMatrix& weights, const CdbConfig& cdb,
                       const ConsensusConfig& consensus_cfg, std::span<std::mt19937_64> rngs,
                       const BalanceObserver& observer = nullptr);

/// Centralized baseline: shares proportional to capacity, then balanced so the
/// SoC-dependent bounds are respected.
std::vector<double> proportional_allocate(double total_demand_kw,
                                          std::span<const EsuParams> params,
                                          std::span<const double> socs, double dt_hours,
                                          const WeightMatrix& weights, const CdbConfig& cdb,
                                          const ConsensusConfig& consensus_cfg,
                                          std::span<std::mt19937_64> rngs);

} // namespace socbal
