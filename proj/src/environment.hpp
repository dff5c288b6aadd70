#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "consensus.hpp"

namespace socbal {

/// Static physical description of one energy storage unit. Powers are in kW,
/// positive = discharge into the grid; SoC is the stored-energy fraction.
struct EsuParams {
    double capacity_kwh = 0.0;
    double p_min_kw = 0.0; // < 0, maximum charging power
    double p_max_kw = 0.0; // > 0, maximum discharging power
    double soc_min = 0.0;
    double soc_max = 0.0;
    double efficiency = 1.0;            // charge/discharge efficiency in (0,1]
    double degr_b1 = 1e-4;              // throughput-loss coefficient
    double degr_b2 = 0.5;               // C-rate exponent coefficient
    double c_rate = 1.0;                // average C-rate
    double install_cost = 1000.0;       // per-unit installation cost
    double eol_retained_fraction = 0.8; // retained capacity at end of life, in [0,1)

    void validate(const std::string& label) const;
};

/// Global simulator truth: per-unit SoC and local demand at a time step.
struct DessState {
    std::vector<double> soc;
    std::vector<double> local_demand_kw;
    int time_step = 0;
};

/// One agent's partial view of the state, expanded with consensus estimates.
/// neighbor_socs is ordered by ascending neighbor node id; the layout is
/// fixed per agent for an entire run.
struct Observation {
    double own_soc = 0.0;
    double own_demand_kw = 0.0;
    std::vector<double> neighbor_socs;
    double est_mean_soc = 0.0;
    double est_mean_demand_kw = 0.0;
};

enum class DemandKind { Sinusoid, RampThenFlat, Trace };

/// Total net demand over time (load minus PV), split uniformly across units.
struct DemandProfile {
    DemandKind kind = DemandKind::Sinusoid;
    double amplitude_kw = 3.0;
    int period_steps = 720;
    double scale = 1.0; // multiplier applied to every total
    std::optional<std::vector<double>> trace;

    void validate(int horizon_steps) const;
};

struct RewardWeights {
    double alpha = -200.0;
    double beta = -0.5;
};

struct StepResult {
    DessState next;
    std::vector<double> local_rewards;
};

/// SoC-adjusted output power bounds for one unit over one step. Any power in
/// [lower, upper] keeps the next SoC inside [soc_min, soc_max].
std::pair<double, double> power_bounds(const EsuParams& params, double soc, double dt_hours);

/// Next SoC after running at power_kw for dt_hours. Discharge divides by the
/// efficiency, charge multiplies by it. power_kw must respect power_bounds.
double soc_transition(const EsuParams& params, double soc, double power_kw, double dt_hours);

/// Throughput degradation cost for one step; nonnegative and even in power.
double degradation_cost(const EsuParams& params, double power_kw, double dt_hours);

/// Total net demand at step t (kW).
double total_demand(const DemandProfile& profile, int t);

/// r = alpha*(next_soc - est_mean_soc)^2 + beta*degr_cost. With both weights
/// nonpositive the reward peaks at 0 for zero deviation and zero throughput.
double local_reward(const RewardWeights& weights, double next_soc, double est_mean_soc,
                    double degr_cost);

/// Applies each unit's power, advances time, refreshes local demands from the
/// profile, and scores local rewards against the pre-step mean-SoC estimates.
StepResult env_step(const DessState& state, std::span<const double> final_powers_kw,
                    const DemandProfile& profile, std::span<const EsuParams> params,
                    const RewardWeights& weights, std::span<const double> est_mean_socs,
                    double dt_hours);

/// Assembles one agent's observation from its own state, its neighbors' SoCs,
/// and this step's consensus estimates.
Observation build_observation(const DessState& state, int agent_id, const GraphTopology& topology,
                              double est_mean_soc, double est_mean_demand_kw);

/// Fixed flattening: [own_soc, own_demand, neighbor_socs..., est_soc, est_demand].
std::vector<double> flatten_observation(const Observation& obs);

/// Observation vector length for an agent on the given topology.
int observation_dim(const GraphTopology& topology, int agent_id);

} // namespace socbal
