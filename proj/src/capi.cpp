#include "socbal.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "log.hpp"
#include "orchestrator.hpp"

using namespace socbal;
using nlohmann::json;

namespace {
thread_local std::string g_create_error;
}

struct socbal_run {
    std::string config_text;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> episodes;
    std::optional<int> horizon;
    std::optional<int> workers;
    std::optional<std::string> drag_mode;
    socbal_progress_fn progress = nullptr;
    void* progress_user = nullptr;
    std::string last_error;

    // Overrides are applied to the document and the result re-parsed, so the
    // embedded config hash always matches what actually ran.
    RunConfig resolve() const {
        json doc = json::parse(parse_config(config_text).resolved_json);
        if (seed) doc["train"]["seed"] = *seed;
        if (episodes) doc["train"]["episodes"] = *episodes;
        if (horizon) doc["train"]["horizon_steps"] = *horizon;
        if (workers) doc["train"]["workers"] = *workers;
        if (drag_mode) doc["cdb"]["drag_mode"] = *drag_mode;
        if (out_dir) doc["output"]["dir"] = *out_dir;
        return parse_config(doc.dump());
    }

    EpisodeCallback episode_callback(int total) const {
        if (!progress) return {};
        auto fn = progress;
        auto user = progress_user;
        return [fn, user, total](const EpisodeMetrics& m) {
            fn(m.episode, total, m.mean_reward, user);
        };
    }
};

namespace {

socbal_status fail_arg(socbal_run* run, const char* msg) {
    if (run) run->last_error = msg;
    else g_create_error = msg;
    return SOCBAL_ERR_INVALID_ARG;
}

template <typename Fn>
socbal_status guarded(socbal_run* run, Fn&& fn) {
    try {
        run->last_error.clear();
        return fn();
    } catch (const ConfigError& e) {
        run->last_error = e.what();
        return SOCBAL_ERR_CONFIG;
    } catch (const Error& e) {
        run->last_error = e.what();
        return SOCBAL_ERR_RUNTIME;
    } catch (const std::exception& e) {
        run->last_error = e.what();
        return SOCBAL_ERR_RUNTIME;
    }
}

} // namespace

extern "C" {

const char* socbal_version(void) { return kVersion; }

void socbal_set_log_level(const char* level) {
    if (!level) return;
    std::string s = level;
    if (s == "debug") set_log_level(LogLevel::Debug);
    else if (s == "info") set_log_level(LogLevel::Info);
    else if (s == "warn") set_log_level(LogLevel::Warn);
    else if (s == "error") set_log_level(LogLevel::Error);
    else if (s == "off") set_log_level(LogLevel::Off);
}

socbal_status socbal_run_create_from_json(const char* config_json, socbal_run** out_run) {
    if (!out_run) return fail_arg(nullptr, "out_run is NULL");
    *out_run = nullptr;
    if (!config_json) return fail_arg(nullptr, "config_json is NULL");
    try {
        parse_config(config_json); // validate now so creation fails loudly
        auto* run = new socbal_run();
        run->config_text = config_json;
        *out_run = run;
        return SOCBAL_OK;
    } catch (const ConfigError& e) {
        g_create_error = e.what();
        return SOCBAL_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_create_error = e.what();
        return SOCBAL_ERR_RUNTIME;
    }
}

socbal_status socbal_run_create(const char* config_path, socbal_run** out_run) {
    if (!out_run) return fail_arg(nullptr, "out_run is NULL");
    *out_run = nullptr;
    if (!config_path) return fail_arg(nullptr, "config_path is NULL");
    std::ifstream in(config_path);
    if (!in) {
        g_create_error = std::string("cannot open '") + config_path + "'";
        return SOCBAL_ERR_IO;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return socbal_run_create_from_json(buf.str().c_str(), out_run);
}

void socbal_run_destroy(socbal_run* run) { delete run; }

const char* socbal_last_error(const socbal_run* run) {
    return run ? run->last_error.c_str() : g_create_error.c_str();
}

socbal_status socbal_run_set_seed(socbal_run* run, uint64_t seed) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    run->seed = seed;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_out_dir(socbal_run* run, const char* dir) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (!dir) return fail_arg(run, "dir is NULL");
    run->out_dir = dir;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_episodes(socbal_run* run, int episodes) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (episodes < 1) return fail_arg(run, "episodes must be >= 1");
    run->episodes = episodes;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_horizon(socbal_run* run, int horizon_steps) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (horizon_steps < 1) return fail_arg(run, "horizon_steps must be >= 1");
    run->horizon = horizon_steps;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_workers(socbal_run* run, int workers) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (workers < 1) return fail_arg(run, "workers must be >= 1");
    run->workers = workers;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_drag_mode(socbal_run* run, const char* mode) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (!mode || (strcmp(mode, "counterfactual") != 0 && strcmp(mode, "factual") != 0)) {
        return fail_arg(run, "drag mode must be 'counterfactual' or 'factual'");
    }
    run->drag_mode = mode;
    return SOCBAL_OK;
}

socbal_status socbal_run_set_progress(socbal_run* run, socbal_progress_fn fn, void* user) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    run->progress = fn;
    run->progress_user = user;
    return SOCBAL_OK;
}

socbal_status socbal_run_config_hash(socbal_run* run, char* buf, size_t buf_len) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (!buf || buf_len == 0) return fail_arg(run, "buffer is NULL or empty");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        if (cfg.config_hash.size() + 1 > buf_len) {
            run->last_error = "buffer too small for the config hash";
            return SOCBAL_ERR_INVALID_ARG;
        }
        memcpy(buf, cfg.config_hash.c_str(), cfg.config_hash.size() + 1);
        return SOCBAL_OK;
    });
}

socbal_status socbal_train(socbal_run* run) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        TrainResult res = run_train(cfg, cfg.output.dir,
                                    run->episode_callback(cfg.train.episodes));
        if (res.unconverged_fraction() > cfg.train.max_unconverged_fraction) {
            run->last_error = std::to_string(res.unconverged_steps) + " of " +
                              std::to_string(res.total_steps) +
                              " steps left the demand balance unconverged (allowed fraction " +
                              std::to_string(cfg.train.max_unconverged_fraction) + ")";
            return SOCBAL_ERR_UNCONVERGED;
        }
        return SOCBAL_OK;
    });
}

socbal_status socbal_evaluate(socbal_run* run, const char* checkpoint_manifest) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (!checkpoint_manifest) return fail_arg(run, "checkpoint_manifest is NULL");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        run_evaluate(cfg, checkpoint_manifest, cfg.output.dir);
        return SOCBAL_OK;
    });
}

socbal_status socbal_baseline(socbal_run* run) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        run_baseline(cfg, cfg.output.dir);
        return SOCBAL_OK;
    });
}

socbal_status socbal_ablate(socbal_run* run) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        run_ablation(cfg, cfg.output.dir, run->episode_callback(cfg.train.episodes));
        return SOCBAL_OK;
    });
}

socbal_status socbal_audit(socbal_run* run, int* out_violations) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        AuditReport report = run_audit(cfg);
        if (out_violations) *out_violations = static_cast<int>(report.violations.size());
        if (!report.clean()) {
            std::string msg = std::to_string(report.violations.size()) +
                              " decentralization violation(s):";
            for (const auto& v : report.violations) {
                msg += "\n  " + format_violation(v);
                log_error(format_violation(v));
            }
            run->last_error = msg;
            return SOCBAL_ERR_VIOLATIONS;
        }
        return SOCBAL_OK;
    });
}

socbal_status socbal_consensus_demo(socbal_run* run, const double* initial_values, size_t count,
                                    int print_trace, double* out_estimates,
                                    int* out_iterations) {
    if (!run) return fail_arg(nullptr, "run is NULL");
    if (!initial_values || count == 0) return fail_arg(run, "initial_values is NULL or empty");
    return guarded(run, [&]() {
        RunConfig cfg = run->resolve();
        GraphTopology topo = cfg.topology();
        if (count != static_cast<size_t>(topo.node_count())) {
            run->last_error = "got " + std::to_string(count) + " values for a " +
                              std::to_string(topo.node_count()) + "-node topology";
            return SOCBAL_ERR_INVALID_ARG;
        }
        WeightMatrix w = metropolis_weights(topo);
        std::vector<double> x(initial_values, initial_values + count);
        if (print_trace) {
            printf("iter");
            for (size_t i = 0; i < count; ++i) printf("  node_%zu", i);
            printf("\n");
        }
        int iter = 0;
        auto print_row = [&]() {
            if (!print_trace) return;
            printf("%4d", iter);
            for (double v : x) printf("  %.6f", v);
            printf("\n");
        };
        print_row();
        ConsensusResult res;
        // step-by-step so the trace shows every iteration
        while (true) {
            res = run_consensus(x, w, ConsensusConfig{cfg.consensus.tolerance, 1});
            if (res.iterations == 0) break;
            x = res.estimates;
            ++iter;
            print_row();
            if (res.converged || iter >= cfg.consensus.max_iterations) break;
        }
        if (out_estimates) {
            for (size_t i = 0; i < count; ++i) out_estimates[i] = x[i];
        }
        if (out_iterations) *out_iterations = iter;
        return SOCBAL_OK;
    });
}

} // extern "C"
