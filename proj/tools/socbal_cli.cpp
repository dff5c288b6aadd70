// Command-line front end over the socbal C API: train, evaluate, baseline,
// ablation, decentralization audit, and a consensus demo.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "socbal.h"

namespace {

struct CommonOpts {
    std::string config;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    int episodes = 0;
    int horizon = 0;
    int workers = 0;
    std::string drag_mode;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "run configuration file (JSON)")->required();
    cmd->add_option("--seed", o.seed, "master seed override")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--out", o.out, "output directory override");
    cmd->add_option("--episodes", o.episodes, "episode count override");
    cmd->add_option("--horizon", o.horizon, "episode horizon override (steps)");
    cmd->add_option("--workers", o.workers, "worker threads for agent updates");
    cmd->add_option("--drag-mode", o.drag_mode, "counterfactual|factual");
}

using RunPtr = std::unique_ptr<socbal_run, decltype(&socbal_run_destroy)>;

int fail(const socbal_run* run, socbal_status status) {
    fprintf(stderr, "error: %s\n", socbal_last_error(run));
    return status == SOCBAL_ERR_CONFIG ? 2 : 1;
}

RunPtr open_run(const CommonOpts& o, int& rc) {
    socbal_run* raw = nullptr;
    socbal_status st = socbal_run_create(o.config.c_str(), &raw);
    RunPtr run(raw, &socbal_run_destroy);
    if (st != SOCBAL_OK) {
        rc = fail(nullptr, st);
        return run;
    }
    if (o.seed_set) socbal_run_set_seed(run.get(), o.seed);
    if (!o.out.empty()) socbal_run_set_out_dir(run.get(), o.out.c_str());
    if (o.episodes > 0) socbal_run_set_episodes(run.get(), o.episodes);
    if (o.horizon > 0) socbal_run_set_horizon(run.get(), o.horizon);
    if (o.workers > 0) socbal_run_set_workers(run.get(), o.workers);
    if (!o.drag_mode.empty() &&
        socbal_run_set_drag_mode(run.get(), o.drag_mode.c_str()) != SOCBAL_OK) {
        rc = fail(run.get(), SOCBAL_ERR_INVALID_ARG);
        run.reset();
        return run;
    }
    rc = 0;
    return run;
}

void print_progress(int episode, int total, double mean_reward, void*) {
    // keep quiet except for a coarse heartbeat
    if (episode == 1 || episode == total || episode % 50 == 0) {
        fprintf(stderr, "episode %d/%d  mean reward %.4f\n", episode, total, mean_reward);
    }
}

void print_hash(socbal_run* run) {
    char hash[32];
    if (socbal_run_config_hash(run, hash, sizeof hash) == SOCBAL_OK) {
        fprintf(stderr, "config hash %s\n", hash);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"socbal: decentralized SoC balancing for distributed energy storage"};
    app.require_subcommand(1);

    CommonOpts train_o, eval_o, base_o, ablate_o, audit_o, demo_o;
    std::string checkpoints;
    std::vector<double> demo_values;

    CLI::App* train = app.add_subcommand("train", "train agents and write metrics/checkpoints");
    add_common(train, train_o);

    CLI::App* eval = app.add_subcommand("eval", "greedy rollout of trained checkpoints");
    add_common(eval, eval_o);
    eval->add_option("--checkpoints", checkpoints, "checkpoint manifest (checkpoints.json)")
        ->required();

    CLI::App* baseline =
        app.add_subcommand("baseline", "capacity-proportional allocation rollout");
    add_common(baseline, base_o);

    CLI::App* ablate =
        app.add_subcommand("ablate", "paired counterfactual vs factual training runs");
    add_common(ablate, ablate_o);

    CLI::App* audit = app.add_subcommand("audit", "decentralization audit on a tagged run");
    add_common(audit, audit_o);

    CLI::App* demo = app.add_subcommand("consensus-demo", "print an average-consensus trace");
    add_common(demo, demo_o);
    demo->add_option("--values", demo_values, "initial per-node values")->required();

    CLI11_PARSE(app, argc, argv);

    int rc = 0;
    if (train->parsed()) {
        RunPtr run = open_run(train_o, rc);
        if (!run) return rc;
        print_hash(run.get());
        socbal_run_set_progress(run.get(), print_progress, nullptr);
        socbal_status st = socbal_train(run.get());
        return st == SOCBAL_OK ? 0 : fail(run.get(), st);
    }
    if (eval->parsed()) {
        RunPtr run = open_run(eval_o, rc);
        if (!run) return rc;
        socbal_status st = socbal_evaluate(run.get(), checkpoints.c_str());
        return st == SOCBAL_OK ? 0 : fail(run.get(), st);
    }
    if (baseline->parsed()) {
        RunPtr run = open_run(base_o, rc);
        if (!run) return rc;
        socbal_status st = socbal_baseline(run.get());
        return st == SOCBAL_OK ? 0 : fail(run.get(), st);
    }
    if (ablate->parsed()) {
        RunPtr run = open_run(ablate_o, rc);
        if (!run) return rc;
        socbal_run_set_progress(run.get(), print_progress, nullptr);
        socbal_status st = socbal_ablate(run.get());
        return st == SOCBAL_OK ? 0 : fail(run.get(), st);
    }
    if (audit->parsed()) {
        RunPtr run = open_run(audit_o, rc);
        if (!run) return rc;
        int violations = 0;
        socbal_status st = socbal_audit(run.get(), &violations);
        if (st == SOCBAL_OK) {
            printf("decentralization audit: no violations\n");
            return 0;
        }
        if (st == SOCBAL_ERR_VIOLATIONS) {
            printf("decentralization audit: %d violation(s)\n%s\n", violations,
                   socbal_last_error(run.get()));
            return 1;
        }
        return fail(run.get(), st);
    }
    if (demo->parsed()) {
        RunPtr run = open_run(demo_o, rc);
        if (!run) return rc;
        std::vector<double> estimates(demo_values.size(), 0.0);
        int iterations = 0;
        socbal_status st =
            socbal_consensus_demo(run.get(), demo_values.data(), demo_values.size(),
                                  /*print_trace=*/1, estimates.data(), &iterations);
        if (st != SOCBAL_OK) return fail(run.get(), st);
        printf("converged estimates after %d iterations:", iterations);
        for (double v : estimates) printf(" %.9f", v);
        printf("\n");
        return 0;
    }
    return rc;
}
