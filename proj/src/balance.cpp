#include "balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace socbal {

void CdbConfig::validate() const {
    if (!(epsilon_kw > 0.0)) throw Error("cdb: epsilon_kw must be > 0");
    if (!(delta_p_kw > 0.0)) throw Error("cdb: delta_p_kw must be > 0");
    if (max_rounds < 1) throw Error("cdb: max_rounds must be >= 1");
}

double drag_counterfactual_with(double proposed_kw, double lower_kw, double upper_kw, double n2) {
    if (lower_kw > upper_kw) throw Error("drag: lower bound exceeds upper bound");
    if (proposed_kw < lower_kw) return n2 * upper_kw;
    if (proposed_kw > upper_kw) return n2 * lower_kw;
    return proposed_kw;
}

double drag_counterfactual(double proposed_kw, double lower_kw, double upper_kw,
                           std::mt19937_64& rng) {
    if (lower_kw > upper_kw) throw Error("drag: lower bound exceeds upper bound");
    if (proposed_kw >= lower_kw && proposed_kw <= upper_kw) return proposed_kw;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    return drag_counterfactual_with(proposed_kw, lower_kw, upper_kw, u01(rng));
}

double drag_factual(double proposed_kw, double lower_kw, double upper_kw) {
    if (lower_kw > upper_kw) throw Error("drag: lower bound exceeds upper bound");
    return std::clamp(proposed_kw, lower_kw, upper_kw);
}

namespace {

double apply_drag(const CdbConfig& cdb, double proposed, double lower, double upper,
                  std::mt19937_64& rng, int agent) {
    double dragged = cdb.drag_mode == DragMode::Counterfactual
                         ? drag_counterfactual(proposed, lower, upper, rng)
                         : drag_factual(proposed, lower, upper);
    // The counterfactual map lands inside [lower, upper] whenever the range
    // contains zero; ranges that exclude zero would escape it, which we treat
    // as corrupted bounds rather than something to clamp silently.
    if (dragged < lower || dragged > upper) {
        throw Error("cdb: dragged power for agent " + std::to_string(agent) + " (" +
                    std::to_string(dragged) + " kW) escaped bounds [" + std::to_string(lower) +
                    "," + std::to_string(upper) + "]; bounds excluding zero are not supported");
    }
    return dragged;
}

} // namespace

BalanceOutcome balance(std::span<const double> initial_powers_kw,
                       std::span<const double> local_demands_kw,
                       std::span<const std::pair<double, double>> per_unit_bounds,
                       const WeightMatrix& weights, const CdbConfig& cdb,
                       const ConsensusConfig& consensus_cfg, std::span<std::mt19937_64> rngs,
                       const BalanceObserver& observer) {
    cdb.validate();
    const size_t n = initial_powers_kw.size();
    if (local_demands_kw.size() != n || per_unit_bounds.size() != n || rngs.size() != n ||
        static_cast<size_t>(weights.node_count()) != n) {
        throw Error("balance: input lengths do not match the unit count");
    }

    double sum_lower = 0.0, sum_upper = 0.0, sum_demand = 0.0;
    for (size_t i = 0; i < n; ++i) {
        auto [lo, hi] = per_unit_bounds[i];
        if (lo > hi) throw Error("balance: unit " + std::to_string(i) + " has lower > upper");
        sum_lower += lo;
        sum_upper += hi;
        sum_demand += local_demands_kw[i];
    }
    if (sum_demand < sum_lower || sum_demand > sum_upper) {
        throw Error("balance: total demand " + std::to_string(sum_demand) +
                    " kW is outside the reachable output range [" + std::to_string(sum_lower) +
                    "," + std::to_string(sum_upper) + "] kW");
    }

    // The consensus estimates carry up to `tolerance` error against the true
    // mean, so the loop aims for epsilon minus that margin; converged then
    // implies |true mean mismatch| <= epsilon.
    const double margin = std::min(consensus_cfg.tolerance, cdb.epsilon_kw / 2.0);
    const double threshold = cdb.epsilon_kw - margin;

    BalanceOutcome out;
    out.final_powers_kw.assign(initial_powers_kw.begin(), initial_powers_kw.end());
    auto& p = out.final_powers_kw;

    // Entry drag: proposals may come from anywhere (actor output plus noise);
    // the outcome contract requires in-range powers even when no round runs.
    for (size_t i = 0; i < n; ++i) {
        p[i] = apply_drag(cdb, p[i], per_unit_bounds[i].first, per_unit_bounds[i].second, rngs[i],
                          static_cast<int>(i));
    }

    std::vector<double> mismatch(n);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    auto estimate_mismatch = [&]() {
        for (size_t i = 0; i < n; ++i) mismatch[i] = local_demands_kw[i] - p[i];
        return run_consensus(mismatch, weights, consensus_cfg).estimates;
    };
    auto worst = [](const std::vector<double>& est) {
        double m = 0.0;
        for (double v : est) m = std::max(m, std::abs(v));
        return m;
    };

    std::vector<double> est = estimate_mismatch();
    if (observer) observer(0, p, worst(est));

    while (worst(est) > threshold && out.rounds_used < cdb.max_rounds) {
        for (size_t i = 0; i < n; ++i) {
            double d_hat = est[i];
            double n1 = u01(rngs[i]);
            double step = (d_hat > 0.0 ? 1.0 : (d_hat < 0.0 ? -1.0 : 0.0)) * n1 *
                          std::max(std::abs(d_hat), cdb.delta_p_kw);
            p[i] = apply_drag(cdb, p[i] + step, per_unit_bounds[i].first,
                              per_unit_bounds[i].second, rngs[i], static_cast<int>(i));
        }
        est = estimate_mismatch();
        ++out.rounds_used;
        if (observer) observer(out.rounds_used, p, worst(est));
    }

    out.converged = worst(est) <= threshold;
    out.residual_mean_kw =
        std::accumulate(est.begin(), est.end(), 0.0) / static_cast<double>(n);
    return out;
}

std::vector<double> proportional_allocate(double total_demand_kw,
                                          std::span<const EsuParams> params,
                                          std::span<const double> socs, double dt_hours,
                                          const WeightMatrix& weights, const CdbConfig& cdb,
                                          const ConsensusConfig& consensus_cfg,
                                          std::span<std::mt19937_64> rngs) {
    const size_t n = params.size();
    if (socs.size() != n) throw Error("proportional_allocate: soc count mismatch");
    double total_capacity = 0.0;
    for (const auto& u : params) total_capacity += u.capacity_kwh;

    std::vector<double> shares(n), demands(n);
    std::vector<std::pair<double, double>> bounds(n);
    for (size_t i = 0; i < n; ++i) {
        shares[i] = total_demand_kw * params[i].capacity_kwh / total_capacity;
        demands[i] = total_demand_kw / static_cast<double>(n);
        bounds[i] = power_bounds(params[i], socs[i], dt_hours);
    }
    return balance(shares, demands, bounds, weights, cdb, consensus_cfg, rngs).final_powers_kw;
}

} // namespace socbal
