#pragma once

#include <functional>
#include <string>
#include <vector>

#include "agent.hpp"
#include "audit.hpp"
#include "balance.hpp"
#include "config.hpp"
#include "consensus.hpp"
#include "environment.hpp"

namespace socbal {

/// One row of the training metrics series.
struct EpisodeMetrics {
    int episode = 0; // 1-based
    double mean_reward = 0.0;
    double soc_variance_end = 0.0;
    double max_mismatch_kw = 0.0;
    double mean_cdb_rounds = 0.0;
    double noise_sigma = 0.0;
    long wall_ms = 0;
};

/// One row of an evaluation/baseline trace.
struct StepTraceRow {
    int step = 0;
    double demand_total_kw = 0.0; // demand the step had to cover
    double power_total_kw = 0.0;  // executed output total
    std::vector<double> soc;      // post-step SoCs
    double variance = 0.0;        // population variance of the post-step SoCs
};

struct TrainResult {
    std::vector<EpisodeMetrics> metrics;
    long total_steps = 0;
    long unconverged_steps = 0;

    double unconverged_fraction() const {
        return total_steps == 0 ? 0.0
                                : static_cast<double>(unconverged_steps) /
                                      static_cast<double>(total_steps);
    }
};

/// Test/diagnostic view of one executed environment step.
struct StepInfo {
    int episode = 0;
    int step = 0;
    std::vector<double> local_rewards;
    std::vector<double> avg_rewards; // consensus estimates stored by the agents
    std::vector<double> powers_kw;
    std::vector<double> demands_kw;
    int cdb_rounds = 0;
    bool cdb_converged = true;
};

using EpisodeCallback = std::function<void(const EpisodeMetrics&)>;
using StepCallback = std::function<void(const StepInfo&)>;

/// Runs the decentralized training loop: per step one consensus pass for the
/// demand and SoC means, action proposals, demand balancing, the environment
/// transition, a consensus pass for the reward, experience storage, and the
/// per-agent learning updates, with agents touching only their own data.
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg, AccessLog* access_log = nullptr);

    TrainResult train(const EpisodeCallback& on_episode = {}, const StepCallback& on_step = {});

    /// Greedy (noise-free) rollout with the current actors; balancing active.
    std::vector<StepTraceRow> rollout_policy(int horizon_steps);

    /// Capacity-proportional allocation each step; no policy involved.
    std::vector<StepTraceRow> rollout_baseline(int horizon_steps);

    void save_checkpoints(const std::string& out_dir) const;
    /// Loads a manifest written by save_checkpoints; throws if a checkpoint's
    /// dimensions do not match this scenario, naming the agent.
    void load_checkpoints(const std::string& manifest_path);

    const RunConfig& config() const { return cfg_; }
    std::vector<Agent>& agents() { return agents_; }
    const GraphTopology& topology() const { return topo_; }
    const WeightMatrix& weights() const { return weights_; }

private:
    DessState initial_state(int episode);
    std::vector<double> consensus_estimates(std::span<const double> values, long& iter_accum);
    Observation observe(const DessState& state, int agent, double est_soc, double est_dem,
                        int step);

    RunConfig cfg_;
    GraphTopology topo_;
    WeightMatrix weights_;
    std::vector<Agent> agents_;
    std::vector<std::mt19937_64> cdb_rngs_;
    std::vector<std::mt19937_64> init_rngs_;
    AccessLog* access_log_;
};

struct RunMeta {
    std::string config_hash;
    uint64_t seed = 0;
    std::string version;
};

void write_metrics_csv(const std::string& path, const std::vector<EpisodeMetrics>& rows,
                       const RunMeta& meta, bool include_timing);
void write_trace_csv(const std::string& path, const std::vector<StepTraceRow>& rows,
                     const RunMeta& meta);

double population_variance(std::span<const double> values);

/// Full train flow: trains, then writes metrics.csv, checkpoints.json +
/// checkpoints/, and config_resolved.json under out_dir.
TrainResult run_train(const RunConfig& cfg, const std::string& out_dir,
                      const EpisodeCallback& on_episode = {});

/// Greedy rollout of saved checkpoints; writes eval_trace.csv under out_dir.
std::vector<StepTraceRow> run_evaluate(const RunConfig& cfg, const std::string& manifest_path,
                                       const std::string& out_dir);

/// Proportional baseline; writes baseline_trace.csv under out_dir.
std::vector<StepTraceRow> run_baseline(const RunConfig& cfg, const std::string& out_dir);

struct AblationResult {
    TrainResult counterfactual;
    TrainResult factual;
};

/// Paired runs differing only in drag mode (asserted via the config hash);
/// writes metrics_counterfactual.csv and metrics_factual.csv under out_dir.
AblationResult run_ablation(const RunConfig& cfg, const std::string& out_dir,
                            const EpisodeCallback& on_episode = {});

/// Short tagged run followed by the decentralization audit. Episodes and
/// horizon are clamped (2 episodes, 288 steps) to keep the trace small.
AuditReport run_audit(const RunConfig& cfg);

} // namespace socbal
