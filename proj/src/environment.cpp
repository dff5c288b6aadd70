#include "environment.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace socbal {

namespace {
constexpr double kPi = 3.14159265358979323846;
// Slack for accumulated rounding when checking SoC/power membership.
constexpr double kFpSlack = 1e-9;
} // namespace

void EsuParams::validate(const std::string& label) const {
    auto fail = [&](const std::string& what) { throw Error(label + ": " + what); };
    if (!(capacity_kwh > 0.0)) fail("capacity_kwh must be > 0");
    if (!(p_min_kw < 0.0 && 0.0 < p_max_kw)) fail("power range must satisfy p_min < 0 < p_max");
    if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0)) {
        fail("SoC range must satisfy 0 <= soc_min < soc_max <= 1");
    }
    if (!(efficiency > 0.0 && efficiency <= 1.0)) fail("efficiency must be in (0,1]");
    if (degr_b1 < 0.0) fail("degr_b1 must be >= 0");
    if (c_rate < 0.0) fail("c_rate must be >= 0");
    if (install_cost < 0.0) fail("install_cost must be >= 0");
    if (!(eol_retained_fraction >= 0.0 && eol_retained_fraction < 1.0)) {
        fail("eol_retained_fraction must be in [0,1)");
    }
}

void DemandProfile::validate(int horizon_steps) const {
    if (period_steps < 1) throw Error("demand: period_steps must be >= 1");
    if (!(scale == scale)) throw Error("demand: scale must be finite");
    if (kind == DemandKind::Trace) {
        if (!trace) throw Error("demand: trace kind requires a trace vector");
        if (static_cast<int>(trace->size()) < horizon_steps + 1) {
            throw Error("demand: trace has " + std::to_string(trace->size()) +
                        " entries but the horizon needs " + std::to_string(horizon_steps + 1));
        }
    }
}

std::pair<double, double> power_bounds(const EsuParams& params, double soc, double dt_hours) {
    if (!(dt_hours > 0.0)) throw Error("power_bounds: dt_hours must be > 0");
    if (soc < params.soc_min - kFpSlack || soc > params.soc_max + kFpSlack) {
        throw Error("power_bounds: soc " + std::to_string(soc) + " outside [" +
                    std::to_string(params.soc_min) + "," + std::to_string(params.soc_max) + "]");
    }
    double upper = std::min(params.efficiency * (soc - params.soc_min) * params.capacity_kwh / dt_hours,
                            params.p_max_kw);
    double lower = std::max((soc - params.soc_max) * params.capacity_kwh / (params.efficiency * dt_hours),
                            params.p_min_kw);
    // At the SoC limits rounding can leave a sign sliver; pin it to zero.
    upper = std::max(upper, 0.0);
    lower = std::min(lower, 0.0);
    return {lower, upper};
}

double soc_transition(const EsuParams& params, double soc, double power_kw, double dt_hours) {
    auto [lower, upper] = power_bounds(params, soc, dt_hours);
    if (power_kw < lower - kFpSlack || power_kw > upper + kFpSlack) {
        throw Error("soc_transition: power " + std::to_string(power_kw) + " kW outside bounds [" +
                    std::to_string(lower) + "," + std::to_string(upper) + "]");
    }
    double next = soc;
    if (power_kw > 0.0) {
        next = soc - power_kw * dt_hours / (params.efficiency * params.capacity_kwh);
    } else if (power_kw < 0.0) {
        next = soc + params.efficiency * (-power_kw) * dt_hours / params.capacity_kwh;
    }
    return std::clamp(next, params.soc_min, params.soc_max);
}

double degradation_cost(const EsuParams& params, double power_kw, double dt_hours) {
    double q_loss = params.degr_b1 * std::exp(params.degr_b2 * params.c_rate) *
                    std::abs(power_kw) * dt_hours;
    return params.install_cost * q_loss / (1.0 - params.eol_retained_fraction);
}

double total_demand(const DemandProfile& profile, int t) {
    if (t < 0) throw Error("total_demand: negative time step");
    switch (profile.kind) {
        case DemandKind::Sinusoid:
            return profile.scale * profile.amplitude_kw * std::sin(t * kPi / profile.period_steps);
        case DemandKind::RampThenFlat:
            return profile.scale * profile.amplitude_kw *
                   std::min(1.0, static_cast<double>(t) / profile.period_steps);
        case DemandKind::Trace:
            if (!profile.trace || t >= static_cast<int>(profile.trace->size())) {
                throw Error("total_demand: step " + std::to_string(t) + " beyond the demand trace");
            }
            return profile.scale * (*profile.trace)[t];
    }
    throw Error("total_demand: unknown demand kind");
}

double local_reward(const RewardWeights& weights, double next_soc, double est_mean_soc,
                    double degr_cost) {
    double dev = next_soc - est_mean_soc;
    return weights.alpha * dev * dev + weights.beta * degr_cost;
}

StepResult env_step(const DessState& state, std::span<const double> final_powers_kw,
                    const DemandProfile& profile, std::span<const EsuParams> params,
                    const RewardWeights& weights, std::span<const double> est_mean_socs,
                    double dt_hours) {
    const size_t n = state.soc.size();
    if (final_powers_kw.size() != n || params.size() != n || est_mean_socs.size() != n ||
        state.local_demand_kw.size() != n) {
        throw Error("env_step: vector lengths do not match the unit count");
    }
    StepResult out;
    out.next.soc.resize(n);
    out.next.time_step = state.time_step + 1;
    out.local_rewards.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double next_soc;
        try {
            next_soc = soc_transition(params[i], state.soc[i], final_powers_kw[i], dt_hours);
        } catch (const Error& e) {
            throw Error("env_step: unit " + std::to_string(i) + ": " + e.what());
        }
        out.next.soc[i] = next_soc;
        double cost = degradation_cost(params[i], final_powers_kw[i], dt_hours);
        out.local_rewards[i] = local_reward(weights, next_soc, est_mean_socs[i], cost);
    }
    double next_total = total_demand(profile, out.next.time_step);
    out.next.local_demand_kw.assign(n, next_total / static_cast<double>(n));
    return out;
}

Observation build_observation(const DessState& state, int agent_id, const GraphTopology& topology,
                              double est_mean_soc, double est_mean_demand_kw) {
    if (agent_id < 0 || agent_id >= topology.node_count() ||
        state.soc.size() != static_cast<size_t>(topology.node_count())) {
        throw Error("build_observation: agent id or state size inconsistent with topology");
    }
    Observation obs;
    obs.own_soc = state.soc[agent_id];
    obs.own_demand_kw = state.local_demand_kw[agent_id];
    obs.neighbor_socs.reserve(topology.neighbors(agent_id).size());
    for (int j : topology.neighbors(agent_id)) {
        obs.neighbor_socs.push_back(state.soc[j]);
    }
    obs.est_mean_soc = est_mean_soc;
    obs.est_mean_demand_kw = est_mean_demand_kw;
    return obs;
}

std::vector<double> flatten_observation(const Observation& obs) {
    std::vector<double> v;
    v.reserve(obs.neighbor_socs.size() + 4);
    v.push_back(obs.own_soc);
    v.push_back(obs.own_demand_kw);
    v.insert(v.end(), obs.neighbor_socs.begin(), obs.neighbor_socs.end());
    v.push_back(obs.est_mean_soc);
    v.push_back(obs.est_mean_demand_kw);
    return v;
}

int observation_dim(const GraphTopology& topology, int agent_id) {
    return 4 + topology.degree(agent_id);
}

} // namespace socbal
