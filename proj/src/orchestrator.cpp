#include "orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "error.hpp"
#include "log.hpp"
#include "rng.hpp"

namespace socbal {

namespace fs = std::filesystem;
using nlohmann::json;

double population_variance(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                  static_cast<double>(values.size());
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return acc / static_cast<double>(values.size());
}

Trainer::Trainer(const RunConfig& cfg, AccessLog* access_log)
    : cfg_(cfg), topo_(cfg.topology()), weights_(metropolis_weights(topo_)),
      access_log_(access_log) {
    cfg_.validate();
    verify_convergence(weights_, cfg_.consensus);
    const int n = topo_.node_count();
    agents_.reserve(n);
    for (int i = 0; i < n; ++i) {
        agents_.emplace_back(i, observation_dim(topo_, i), cfg_.units[i].p_min_kw,
                             cfg_.units[i].p_max_kw, cfg_.learning, cfg_.train.seed);
        cdb_rngs_.push_back(make_engine(cfg_.train.seed, "cdb", static_cast<uint64_t>(i)));
        init_rngs_.push_back(make_engine(cfg_.train.seed, "init_soc", static_cast<uint64_t>(i)));
    }
}

DessState Trainer::initial_state(int /*episode*/) {
    const int n = topo_.node_count();
    DessState s;
    s.time_step = 0;
    s.soc.resize(n);
    for (int i = 0; i < n; ++i) {
        if (cfg_.train.initial_soc.kind == InitialSocRule::Kind::Fixed) {
            s.soc[i] = cfg_.train.initial_soc.values[i];
        } else {
            std::uniform_real_distribution<double> u(cfg_.train.initial_soc.low,
                                                     cfg_.train.initial_soc.high);
            s.soc[i] = u(init_rngs_[i]);
        }
    }
    double total = total_demand(cfg_.demand, 0);
    s.local_demand_kw.assign(n, total / static_cast<double>(n));
    return s;
}

std::vector<double> Trainer::consensus_estimates(std::span<const double> values,
                                                 long& iter_accum) {
    ConsensusResult res = run_consensus(values, weights_, cfg_.consensus);
    iter_accum += res.iterations;
    if (!res.converged) {
        log_warn("consensus did not reach tolerance within " +
                 std::to_string(cfg_.consensus.max_iterations) + " iterations");
    }
    return std::move(res.estimates);
}

Observation Trainer::observe(const DessState& state, int agent, double est_soc, double est_dem,
                             int step) {
    if (access_log_ && access_log_->enabled) {
        access_log_->note(step, agent, AccessKind::OwnSoc, agent);
        access_log_->note(step, agent, AccessKind::OwnDemand, agent);
        for (int j : topo_.neighbors(agent)) {
            access_log_->note(step, agent, AccessKind::NeighborSoc, j);
        }
        access_log_->note(step, agent, AccessKind::ConsensusEstimate, agent);
        access_log_->note(step, agent, AccessKind::ConsensusEstimate, agent);
    }
    return build_observation(state, agent, topo_, est_soc, est_dem);
}

namespace {

// Runs fn(i) for i in [0,n), optionally split across worker threads. Agents
// are self-contained, so the result does not depend on the split.
template <typename Fn>
void for_each_agent(int n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int used = std::min(workers, n);
    std::vector<std::exception_ptr> errors(used);
    std::vector<std::thread> threads;
    threads.reserve(used);
    for (int w = 0; w < used; ++w) {
        threads.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += used) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace

TrainResult Trainer::train(const EpisodeCallback& on_episode, const StepCallback& on_step) {
    const int n = topo_.node_count();
    const int horizon = cfg_.train.horizon_steps;
    const double dt = cfg_.train.dt_hours;
    TrainResult result;
    result.metrics.reserve(cfg_.train.episodes);

    std::vector<double> proposals(n);
    std::vector<std::pair<double, double>> bounds(n);

    for (int ep = 1; ep <= cfg_.train.episodes; ++ep) {
        auto ep_start = std::chrono::steady_clock::now();
        long consensus_iters = 0;

        DessState state = initial_state(ep);
        std::vector<double> est_soc = consensus_estimates(state.soc, consensus_iters);
        std::vector<double> est_dem = consensus_estimates(state.local_demand_kw, consensus_iters);
        std::vector<std::vector<double>> obs(n), next_obs(n);
        for (int i = 0; i < n; ++i) {
            obs[i] = flatten_observation(observe(state, i, est_soc[i], est_dem[i], 0));
        }

        double reward_accum = 0.0;
        double max_mismatch = 0.0;
        long rounds_accum = 0;

        for (int t = 0; t < horizon; ++t) {
            for (int i = 0; i < n; ++i) {
                proposals[i] = agents_[i].select_action(obs[i], /*explore=*/true);
                bounds[i] = power_bounds(cfg_.units[i], state.soc[i], dt);
            }
            BalanceOutcome outcome =
                balance(proposals, state.local_demand_kw, bounds, weights_, cfg_.cdb,
                        cfg_.consensus, cdb_rngs_);
            ++result.total_steps;
            rounds_accum += outcome.rounds_used;
            if (!outcome.converged) {
                ++result.unconverged_steps;
                log_debug("episode " + std::to_string(ep) + " step " + std::to_string(t) +
                          ": balance stopped at residual " +
                          std::to_string(outcome.residual_mean_kw) + " kW");
            }
            double demand_sum = std::accumulate(state.local_demand_kw.begin(),
                                                state.local_demand_kw.end(), 0.0);
            double power_sum = std::accumulate(outcome.final_powers_kw.begin(),
                                               outcome.final_powers_kw.end(), 0.0);
            max_mismatch = std::max(max_mismatch, std::abs(power_sum - demand_sum));

            StepResult sr = env_step(state, outcome.final_powers_kw, cfg_.demand, cfg_.units,
                                     cfg_.train.reward, est_soc, dt);

            std::vector<double> avg_rewards =
                consensus_estimates(sr.local_rewards, consensus_iters);
            std::vector<double> next_est_soc = consensus_estimates(sr.next.soc, consensus_iters);
            std::vector<double> next_est_dem =
                consensus_estimates(sr.next.local_demand_kw, consensus_iters);
            for (int i = 0; i < n; ++i) {
                next_obs[i] = flatten_observation(
                    observe(sr.next, i, next_est_soc[i], next_est_dem[i], t + 1));
                if (access_log_ && access_log_->enabled) {
                    access_log_->note(t, i, AccessKind::ConsensusEstimate, i); // reward
                }
                agents_[i].store(TransitionRecord{obs[i], outcome.final_powers_kw[i],
                                                  avg_rewards[i], next_obs[i]});
            }
            reward_accum += std::accumulate(avg_rewards.begin(), avg_rewards.end(), 0.0) /
                            static_cast<double>(n);

            if (on_step) {
                StepInfo info;
                info.episode = ep;
                info.step = t;
                info.local_rewards = sr.local_rewards;
                info.avg_rewards = avg_rewards;
                info.powers_kw = outcome.final_powers_kw;
                info.demands_kw = state.local_demand_kw;
                info.cdb_rounds = outcome.rounds_used;
                info.cdb_converged = outcome.converged;
                on_step(info);
            }

            if ((t + 1) % cfg_.train.update_every == 0) {
                for_each_agent(n, cfg_.train.workers, [&](int i) {
                    if (agents_[i].ready_to_learn()) {
                        agents_[i].learn();
                        agents_[i].soft_update();
                    }
                });
            }

            state = std::move(sr.next);
            obs.swap(next_obs);
            est_soc = std::move(next_est_soc);
        }

        EpisodeMetrics m;
        m.episode = ep;
        m.mean_reward = reward_accum / static_cast<double>(horizon);
        m.soc_variance_end = population_variance(state.soc);
        m.max_mismatch_kw = max_mismatch;
        m.mean_cdb_rounds = static_cast<double>(rounds_accum) / static_cast<double>(horizon);
        m.noise_sigma = agents_[0].noise_sigma_kw();
        m.wall_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - ep_start)
                                          .count());
        result.metrics.push_back(m);
        log_debug("episode " + std::to_string(ep) + ": mean reward " +
                  std::to_string(m.mean_reward) + ", consensus iterations " +
                  std::to_string(consensus_iters));
        if (on_episode) on_episode(m);
        for (auto& a : agents_) a.decay_noise();
    }
    return result;
}

namespace {

StepTraceRow make_trace_row(int t, double demand_total, double power_total,
                            const std::vector<double>& soc) {
    StepTraceRow row;
    row.step = t;
    row.demand_total_kw = demand_total;
    row.power_total_kw = power_total;
    row.soc = soc;
    row.variance = population_variance(soc);
    return row;
}

} // namespace

std::vector<StepTraceRow> Trainer::rollout_policy(int horizon_steps) {
    const int n = topo_.node_count();
    const double dt = cfg_.train.dt_hours;
    long iters = 0;
    DessState state = initial_state(0);
    std::vector<double> est_soc = consensus_estimates(state.soc, iters);
    std::vector<double> est_dem = consensus_estimates(state.local_demand_kw, iters);

    std::vector<StepTraceRow> trace;
    trace.reserve(horizon_steps);
    std::vector<double> proposals(n);
    std::vector<std::pair<double, double>> bounds(n);
    for (int t = 0; t < horizon_steps; ++t) {
        for (int i = 0; i < n; ++i) {
            auto flat = flatten_observation(observe(state, i, est_soc[i], est_dem[i], t));
            proposals[i] = agents_[i].select_action(flat, /*explore=*/false);
            bounds[i] = power_bounds(cfg_.units[i], state.soc[i], dt);
        }
        BalanceOutcome outcome = balance(proposals, state.local_demand_kw, bounds, weights_,
                                         cfg_.cdb, cfg_.consensus, cdb_rngs_);
        double demand_sum = std::accumulate(state.local_demand_kw.begin(),
                                            state.local_demand_kw.end(), 0.0);
        double power_sum = std::accumulate(outcome.final_powers_kw.begin(),
                                           outcome.final_powers_kw.end(), 0.0);
        StepResult sr = env_step(state, outcome.final_powers_kw, cfg_.demand, cfg_.units,
                                 cfg_.train.reward, est_soc, dt);
        trace.push_back(make_trace_row(t, demand_sum, power_sum, sr.next.soc));
        state = std::move(sr.next);
        est_soc = consensus_estimates(state.soc, iters);
        est_dem = consensus_estimates(state.local_demand_kw, iters);
    }
    return trace;
}

std::vector<StepTraceRow> Trainer::rollout_baseline(int horizon_steps) {
    const double dt = cfg_.train.dt_hours;
    long iters = 0;
    DessState state = initial_state(0);

    std::vector<StepTraceRow> trace;
    trace.reserve(horizon_steps);
    for (int t = 0; t < horizon_steps; ++t) {
        double demand_sum = std::accumulate(state.local_demand_kw.begin(),
                                            state.local_demand_kw.end(), 0.0);
        std::vector<double> powers =
            proportional_allocate(demand_sum, cfg_.units, state.soc, dt, weights_, cfg_.cdb,
                                  cfg_.consensus, cdb_rngs_);
        double power_sum = std::accumulate(powers.begin(), powers.end(), 0.0);
        std::vector<double> est_soc = consensus_estimates(state.soc, iters);
        StepResult sr = env_step(state, powers, cfg_.demand, cfg_.units, cfg_.train.reward,
                                 est_soc, dt);
        trace.push_back(make_trace_row(t, demand_sum, power_sum, sr.next.soc));
        state = std::move(sr.next);
    }
    return trace;
}

namespace {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw Error("checkpoint manifest: unknown activation '" + s + "'");
}

} // namespace

void Trainer::save_checkpoints(const std::string& out_dir) const {
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = cfg_.config_hash;
    manifest["seed"] = cfg_.train.seed;
    manifest["hidden_activation"] = activation_name(cfg_.learning.hidden_activation);
    json agents = json::array();
    for (const Agent& a : agents_) {
        std::string rel = "checkpoints/agent_" + std::to_string(a.id()) + ".ckpt";
        fs::path file = fs::path(out_dir) / rel;
        std::ofstream out(file, std::ios::binary);
        if (!out) throw Error("cannot write checkpoint '" + file.string() + "'");
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        // order: actor, critic, target actor, target critic
        write_mlp(out, a.actor());
        write_mlp(out, a.critic());
        write_mlp(out, a.target_actor());
        write_mlp(out, a.target_critic());
        if (!out) throw Error("checkpoint write failed for '" + file.string() + "'");
        agents.push_back({{"id", a.id()},
                          {"file", rel},
                          {"obs_dim", a.obs_dim()},
                          {"action_lower_kw", a.action_lower_kw()},
                          {"action_upper_kw", a.action_upper_kw()}});
    }
    manifest["agents"] = agents;
    std::ofstream mf(fs::path(out_dir) / "checkpoints.json");
    if (!mf) throw Error("cannot write checkpoint manifest under '" + out_dir + "'");
    mf << manifest.dump(2) << "\n";
}

void Trainer::load_checkpoints(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw Error("cannot open checkpoint manifest '" + manifest_path + "'");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::parse_error& e) {
        throw Error("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    if (!manifest.contains("agents") || !manifest["agents"].is_array()) {
        throw Error("checkpoint manifest lists no agents");
    }
    const auto& listed = manifest["agents"];
    if (static_cast<int>(listed.size()) != topo_.node_count()) {
        throw Error("checkpoint manifest lists " + std::to_string(listed.size()) +
                    " agents but the scenario has " + std::to_string(topo_.node_count()));
    }
    Activation hidden = activation_from_name(
        manifest.value("hidden_activation", std::string("relu")));
    fs::path base = fs::path(manifest_path).parent_path();

    for (const auto& entry : listed) {
        int id = entry.at("id").get<int>();
        if (id < 0 || id >= topo_.node_count()) {
            throw Error("checkpoint manifest references unknown agent " + std::to_string(id));
        }
        Agent& agent = agents_[id];
        int want_dim = observation_dim(topo_, id);
        int have_dim = entry.at("obs_dim").get<int>();
        if (have_dim != want_dim) {
            throw Error("agent " + std::to_string(id) + ": checkpoint observation dim " +
                        std::to_string(have_dim) + " does not match scenario dim " +
                        std::to_string(want_dim));
        }
        double lo = entry.at("action_lower_kw").get<double>();
        double hi = entry.at("action_upper_kw").get<double>();
        if (lo != agent.action_lower_kw() || hi != agent.action_upper_kw()) {
            throw Error("agent " + std::to_string(id) +
                        ": checkpoint action range does not match the scenario unit");
        }
        fs::path file = base / entry.at("file").get<std::string>();
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error("cannot open checkpoint '" + file.string() + "'");
        char magic[sizeof kCheckpointMagic];
        in.read(magic, sizeof magic);
        if (!in || memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
            throw Error("'" + file.string() + "' is not a checkpoint file (bad magic)");
        }
        Mlp actor = read_mlp(in, hidden, Activation::Tanh);
        Mlp critic = read_mlp(in, hidden, Activation::Identity);
        Mlp t_actor = read_mlp(in, hidden, Activation::Tanh);
        Mlp t_critic = read_mlp(in, hidden, Activation::Identity);
        if (actor.input_dim() != want_dim || critic.input_dim() != want_dim + 1) {
            throw Error("agent " + std::to_string(id) +
                        ": checkpoint network dims do not match scenario dim " +
                        std::to_string(want_dim));
        }
        agent.actor() = std::move(actor);
        agent.critic() = std::move(critic);
        agent.target_actor() = std::move(t_actor);
        agent.target_critic() = std::move(t_critic);
    }
}

namespace {

void write_meta(std::ofstream& out, const RunMeta& meta) {
    out << "# config_hash=" << meta.config_hash << " seed=" << meta.seed
        << " version=" << meta.version << "\n";
}

std::string fmt(double v) {
    char buf[32];
    snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace

void write_metrics_csv(const std::string& path, const std::vector<EpisodeMetrics>& rows,
                       const RunMeta& meta, bool include_timing) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metrics to '" + path + "'");
    write_meta(out, meta);
    out << "episode,mean_reward,soc_variance_end,max_mismatch_kw,mean_cdb_rounds,noise_sigma,"
           "wall_ms\n";
    for (const auto& m : rows) {
        out << m.episode << ',' << fmt(m.mean_reward) << ',' << fmt(m.soc_variance_end) << ','
            << fmt(m.max_mismatch_kw) << ',' << fmt(m.mean_cdb_rounds) << ','
            << fmt(m.noise_sigma) << ',' << (include_timing ? m.wall_ms : 0) << "\n";
    }
}

void write_trace_csv(const std::string& path, const std::vector<StepTraceRow>& rows,
                     const RunMeta& meta) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write trace to '" + path + "'");
    write_meta(out, meta);
    out << "step,demand_total,power_total";
    size_t n = rows.empty() ? 0 : rows.front().soc.size();
    for (size_t i = 1; i <= n; ++i) out << ",soc_" << i;
    out << ",variance\n";
    for (const auto& r : rows) {
        out << r.step << ',' << fmt(r.demand_total_kw) << ',' << fmt(r.power_total_kw);
        for (double s : r.soc) out << ',' << fmt(s);
        out << ',' << fmt(r.variance) << "\n";
    }
}

namespace {

RunMeta meta_for(const RunConfig& cfg) {
    return RunMeta{cfg.config_hash, cfg.train.seed, kVersion};
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    std::ofstream out(fs::path(out_dir) / "config_resolved.json");
    if (!out) throw Error("cannot write resolved config under '" + out_dir + "'");
    out << cfg.resolved_json << "\n";
}

} // namespace

TrainResult run_train(const RunConfig& cfg, const std::string& out_dir,
                      const EpisodeCallback& on_episode) {
    fs::create_directories(out_dir);
    Trainer trainer(cfg);
    TrainResult result = trainer.train(on_episode);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.metrics,
                      meta_for(cfg), cfg.output.include_timing);
    trainer.save_checkpoints(out_dir);
    write_resolved_config(cfg, out_dir);
    return result;
}

std::vector<StepTraceRow> run_evaluate(const RunConfig& cfg, const std::string& manifest_path,
                                       const std::string& out_dir) {
    fs::create_directories(out_dir);
    Trainer trainer(cfg);
    trainer.load_checkpoints(manifest_path);
    auto trace = trainer.rollout_policy(cfg.train.horizon_steps);
    write_trace_csv((fs::path(out_dir) / "eval_trace.csv").string(), trace, meta_for(cfg));
    return trace;
}

std::vector<StepTraceRow> run_baseline(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Trainer trainer(cfg);
    auto trace = trainer.rollout_baseline(cfg.train.horizon_steps);
    write_trace_csv((fs::path(out_dir) / "baseline_trace.csv").string(), trace, meta_for(cfg));
    return trace;
}

AblationResult run_ablation(const RunConfig& cfg, const std::string& out_dir,
                            const EpisodeCallback& on_episode) {
    fs::create_directories(out_dir);
    auto variant = [&](const char* mode) {
        json doc = json::parse(cfg.resolved_json);
        doc["cdb"]["drag_mode"] = mode;
        return parse_config(doc.dump());
    };
    RunConfig counterfactual = variant("counterfactual");
    RunConfig factual = variant("factual");
    if (counterfactual.hash_ignoring_drag_mode != factual.hash_ignoring_drag_mode) {
        throw Error("ablation: the paired configs differ beyond drag_mode");
    }

    AblationResult out;
    {
        Trainer t(counterfactual);
        out.counterfactual = t.train(on_episode);
        write_metrics_csv((fs::path(out_dir) / "metrics_counterfactual.csv").string(),
                          out.counterfactual.metrics, meta_for(counterfactual),
                          counterfactual.output.include_timing);
    }
    {
        Trainer t(factual);
        out.factual = t.train(on_episode);
        write_metrics_csv((fs::path(out_dir) / "metrics_factual.csv").string(),
                          out.factual.metrics, meta_for(factual), factual.output.include_timing);
    }
    return out;
}

AuditReport run_audit(const RunConfig& cfg) {
    RunConfig clamped = cfg;
    clamped.train.episodes = std::min(clamped.train.episodes, 2);
    clamped.train.horizon_steps = std::min(clamped.train.horizon_steps, 288);
    AccessLog log;
    log.enabled = true;
    Trainer trainer(clamped, &log);
    trainer.train();
    return decentralization_audit(log, trainer.topology());
}

} // namespace socbal
