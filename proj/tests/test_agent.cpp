#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "agent.hpp"
#include "error.hpp"
#include "mlp.hpp"

using namespace socbal;

namespace {

DdpgConfig small_cfg() {
    DdpgConfig cfg;
    cfg.hidden_dims = {16, 16};
    cfg.batch_size = 4;
    cfg.learn_start = 4;
    return cfg;
}

void zero_out(Mlp& net) {
    for (auto& w : net.weights) std::fill(w.a.begin(), w.a.end(), 0.0);
    for (auto& b : net.biases) std::fill(b.begin(), b.end(), 0.0);
}

TransitionRecord record(std::vector<double> obs, double action, double reward,
                        std::vector<double> next) {
    return TransitionRecord{std::move(obs), action, reward, std::move(next)};
}

std::vector<const TransitionRecord*> as_batch(const std::vector<TransitionRecord>& recs) {
    std::vector<const TransitionRecord*> out;
    for (const auto& r : recs) out.push_back(&r);
    return out;
}

} // namespace

TEST_CASE("replay buffer evicts the oldest record first") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 4; ++i) {
        buf.push(record({double(i), 0.0}, i, i, {double(i), 0.0}));
    }
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).action_kw == 1.0); // record 0 evicted
    CHECK(buf.at(1).action_kw == 2.0);
    CHECK(buf.at(2).action_kw == 3.0);
}

TEST_CASE("replay sampling returns distinct records") {
    ReplayBuffer buf(16);
    for (int i = 0; i < 10; ++i) buf.push(record({double(i), 0.0}, i, 0, {double(i), 0.0}));
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        auto batch = buf.sample(5, rng);
        for (size_t a = 0; a < batch.size(); ++a) {
            for (size_t b = a + 1; b < batch.size(); ++b) {
                CHECK(batch[a] != batch[b]);
            }
        }
    }
    CHECK_THROWS_AS(buf.sample(11, rng), Error);
}

TEST_CASE("replay sampling is uniform over records") {
    ReplayBuffer buf(16);
    for (int i = 0; i < 10; ++i) buf.push(record({double(i), 0.0}, i, 0, {double(i), 0.0}));
    std::mt19937_64 rng(7);
    const int trials = 100000, k = 3;
    std::vector<int> counts(10, 0);
    for (int t = 0; t < trials; ++t) {
        for (const auto* rec : buf.sample(k, rng)) {
            counts[static_cast<int>(rec->action_kw)]++;
        }
    }
    // each record is included with p = k/10; allow 3 sigma
    double expect = trials * 0.3;
    double sigma = std::sqrt(trials * 0.3 * 0.7);
    for (int c : counts) {
        CHECK(std::abs(c - expect) <= 3.0 * sigma);
    }
}

TEST_CASE("a zeroed actor proposes the midpoint of its range") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 42);
    zero_out(agent.actor());
    std::vector<double> obs{0.5, 1.0, 0.5, 1.0};
    CHECK(agent.select_action(obs, false) == doctest::Approx(0.0)); // midpoint of +-180
    Agent skewed(0, 4, -100.0, 300.0, small_cfg(), 42);
    zero_out(skewed.actor());
    CHECK(skewed.select_action(obs, false) == doctest::Approx(100.0));
}

TEST_CASE("greedy action selection is deterministic") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 7);
    std::vector<double> obs{0.4, 2.0, 0.3, 2.0};
    CHECK(agent.select_action(obs, false) == agent.select_action(obs, false));
}

TEST_CASE("exploration noise has the configured scale") {
    DdpgConfig cfg = small_cfg();
    cfg.noise_sigma_kw = 5.0;
    Agent agent(0, 4, -180.0, 180.0, cfg, 13);
    std::vector<double> obs{0.5, 0.0, 0.5, 0.0};
    double base = agent.select_action(obs, false);
    const int draws = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < draws; ++i) {
        double a = agent.select_action(obs, true);
        sum += a - base;
        sumsq += (a - base) * (a - base);
    }
    double mean = sum / draws;
    CHECK(std::abs(mean) <= 5.0 * 3.0 / std::sqrt(double(draws))); // 3 sigma of the mean
    double var = sumsq / draws - mean * mean;
    CHECK(std::sqrt(var) == doctest::Approx(5.0).epsilon(0.1));
}

TEST_CASE("noise decay shrinks sigma per episode") {
    DdpgConfig cfg = small_cfg();
    cfg.noise_sigma_kw = 5.0;
    cfg.noise_decay = 0.9;
    Agent agent(0, 4, -180.0, 180.0, cfg, 13);
    agent.decay_noise();
    agent.decay_noise();
    CHECK(agent.noise_sigma_kw() == doctest::Approx(5.0 * 0.81));
}

TEST_CASE("td target reduces to the reward when gamma is zero") {
    DdpgConfig cfg = small_cfg();
    cfg.gamma = 0.0;
    Agent agent(0, 4, -180.0, 180.0, cfg, 3);
    CHECK(agent.td_target(1.25, std::vector<double>{0.5, 0.0, 0.5, 0.0}) ==
          doctest::Approx(1.25));
}

TEST_CASE("td target reduces to the reward when the target critic is zero") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 3);
    zero_out(agent.target_critic());
    CHECK(agent.td_target(-0.75, std::vector<double>{0.5, 0.0, 0.5, 0.0}) ==
          doctest::Approx(-0.75));
}

TEST_CASE("td target composes reward and a forced target critic value") {
    DdpgConfig cfg = small_cfg();
    cfg.gamma = 0.99;
    Agent agent(0, 4, -180.0, 180.0, cfg, 3);
    zero_out(agent.target_critic());
    agent.target_critic().biases.back()[0] = 2.0; // Q' == 2 everywhere
    CHECK(agent.td_target(1.0, std::vector<double>{0.5, 0.0, 0.5, 0.0}) ==
          doctest::Approx(2.98));
}

TEST_CASE("critic update has zero loss and no movement when Q already fits") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 5);
    zero_out(agent.critic());
    zero_out(agent.target_critic());
    std::vector<TransitionRecord> recs;
    for (int i = 0; i < 4; ++i) {
        recs.push_back(record({0.1 * i, 0.0, 0.5, 0.0}, 10.0 * i, 0.0, {0.1 * i, 0.0, 0.5, 0.0}));
    }
    Mlp before = agent.critic();
    double loss = agent.update_critic(as_batch(recs));
    CHECK(loss == 0.0);
    for (size_t l = 0; l < before.weights.size(); ++l) {
        CHECK(agent.critic().weights[l].a == before.weights[l].a);
    }
}

TEST_CASE("critic loss matches an independent accumulation on a two-record batch") {
    Agent agent(0, 4, -300.0, 300.0, small_cfg(), 11);
    std::vector<TransitionRecord> recs{
        record({0.3, 1.0, 0.4, 1.0}, 50.0, -1.0, {0.31, 1.0, 0.4, 1.0}),
        record({0.7, -2.0, 0.6, -2.0}, -80.0, -0.25, {0.69, -2.0, 0.6, -2.0}),
    };
    // accumulate the expected loss through the public pieces
    double expect = 0.0;
    for (const auto& r : recs) {
        double y = agent.td_target(r.avg_reward, r.next_observation);
        double q = agent.q_value(r.observation, r.action_kw);
        expect += (y - q) * (y - q);
    }
    expect /= 2.0;
    double loss = agent.update_critic(as_batch(recs));
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("critic loss decreases over repeated updates on a fixed batch") {
    Agent agent(0, 4, -300.0, 300.0, small_cfg(), 17);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> soc(0.1, 0.9), act(-200.0, 200.0), rew(-3.0, 0.0);
    std::vector<TransitionRecord> recs;
    for (int i = 0; i < 8; ++i) {
        std::vector<double> o{soc(rng), 1.0, soc(rng), 1.0};
        recs.push_back(record(o, act(rng), rew(rng), o));
    }
    auto batch = as_batch(recs);
    double first = agent.update_critic(batch);
    double last = first;
    for (int i = 0; i < 99; ++i) last = agent.update_critic(batch);
    CHECK(last < first);
}

TEST_CASE("a constant critic leaves the actor untouched") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 23);
    zero_out(agent.critic());
    agent.critic().biases.back()[0] = 3.5; // Q == 3.5 regardless of the action
    std::vector<TransitionRecord> recs{
        record({0.4, 0.0, 0.4, 0.0}, 10.0, 0.0, {0.4, 0.0, 0.4, 0.0}),
        record({0.6, 0.0, 0.5, 0.0}, -10.0, 0.0, {0.6, 0.0, 0.5, 0.0}),
    };
    Mlp before = agent.actor();
    double objective = agent.update_actor(as_batch(recs));
    CHECK(objective == doctest::Approx(3.5));
    for (size_t l = 0; l < before.weights.size(); ++l) {
        CHECK(agent.actor().weights[l].a == before.weights[l].a);
    }
}

TEST_CASE("the actor climbs a quadratic critic toward its peak") {
    // regress the critic onto Q(o, a) = -(a_kw - 3)^2, then repeated actor
    // updates must move the policy output toward 3
    DdpgConfig cfg = small_cfg();
    cfg.hidden_dims = {32};
    cfg.hidden_activation = Activation::Tanh;
    Agent agent(0, 2, -6.0, 6.0, cfg, 29);

    std::vector<double> obs{0.5, 0.0};
    auto norm = agent.normalized_obs(obs);
    AdamState opt = make_adam(agent.critic(), 0.01);
    MlpGrads grads = make_grads(agent.critic());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> a_draw(-6.0, 6.0);
    MlpWorkspace ws, scratch;
    const int fit_steps = 8000;
    for (int step = 0; step < fit_steps; ++step) {
        grads.zero();
        double mse = 0.0;
        for (int k = 0; k < 16; ++k) {
            double a_kw = a_draw(rng);
            std::vector<double> in{norm[0], norm[1], a_kw / 6.0};
            forward(agent.critic(), in, ws);
            double q = ws.output()[0];
            double want = -(a_kw - 3.0) * (a_kw - 3.0);
            double err = q - want;
            mse += err * err;
            double upstream[1] = {2.0 * err / 16.0};
            backward(agent.critic(), ws, std::span<const double>(upstream, 1), grads, scratch);
        }
        optimizer_step(opt, agent.critic(), grads);
        // targets span [-81, 0]; a percent-level fit is enough for the climb
        if (step == fit_steps - 1) CHECK(mse / 16.0 < 2.0);
    }

    std::vector<TransitionRecord> recs{record(obs, 0.0, 0.0, obs)};
    auto batch = as_batch(recs);
    for (int i = 0; i < 3000; ++i) agent.update_actor(batch);
    CHECK(agent.select_action(obs, false) == doctest::Approx(3.0).epsilon(0.15));
}

TEST_CASE("critic gradients match finite differences through the TD loss") {
    std::mt19937_64 seed_rng(31);
    for (int trial = 0; trial < 4; ++trial) {
        DdpgConfig cfg = small_cfg();
        cfg.hidden_activation = trial % 2 == 0 ? Activation::Relu : Activation::Tanh;
        Agent agent(0, 4, -200.0, 200.0, cfg, seed_rng());
        std::mt19937_64 rng(seed_rng());
        std::uniform_real_distribution<double> soc(0.1, 0.9), act(-150.0, 150.0), rew(-2.0, 0.0);
        std::vector<TransitionRecord> recs;
        for (int i = 0; i < 6; ++i) {
            recs.push_back(record({soc(rng), 1.0, soc(rng), 1.0}, act(rng), rew(rng),
                                  {soc(rng), 1.0, soc(rng), 1.0}));
        }
        auto batch = as_batch(recs);
        MlpGrads grads = make_grads(agent.critic());
        agent.critic_loss_and_grad(batch, grads);

        MlpGrads probe = make_grads(agent.critic());
        auto loss_fn = [&]() { return agent.critic_loss_and_grad(batch, probe); };
        std::uniform_int_distribution<int> layer_pick(0, agent.critic().layer_count() - 1);
        for (int p = 0; p < 25; ++p) {
            int l = layer_pick(rng);
            auto& w = agent.critic().weights[l].a;
            std::uniform_int_distribution<int> idx(0, static_cast<int>(w.size()) - 1);
            int i = idx(rng);
            const double h = 1e-5, saved = w[i];
            w[i] = saved + h;
            double up = loss_fn();
            w[i] = saved - h;
            double down = loss_fn();
            w[i] = saved;
            double numeric = (up - down) / (2 * h);
            double analytic = grads.weights[l].a[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            CHECK(std::abs(numeric - analytic) / denom <= 1e-4);
        }
    }
}

TEST_CASE("actor gradients match finite differences through mean Q") {
    std::mt19937_64 seed_rng(37);
    for (int trial = 0; trial < 4; ++trial) {
        DdpgConfig cfg = small_cfg();
        cfg.hidden_activation = trial % 2 == 0 ? Activation::Tanh : Activation::Relu;
        Agent agent(0, 4, -200.0, 200.0, cfg, seed_rng());
        std::mt19937_64 rng(seed_rng());
        std::uniform_real_distribution<double> soc(0.1, 0.9);
        std::vector<TransitionRecord> recs;
        for (int i = 0; i < 6; ++i) {
            std::vector<double> o{soc(rng), 1.0, soc(rng), 1.0};
            recs.push_back(record(o, 0.0, 0.0, o));
        }
        auto batch = as_batch(recs);
        MlpGrads grads = make_grads(agent.actor());
        agent.actor_objective_and_grad(batch, grads); // gradient of -J

        MlpGrads probe = make_grads(agent.actor());
        auto objective_fn = [&]() { return agent.actor_objective_and_grad(batch, probe); };
        std::uniform_int_distribution<int> layer_pick(0, agent.actor().layer_count() - 1);
        for (int p = 0; p < 25; ++p) {
            int l = layer_pick(rng);
            auto& w = agent.actor().weights[l].a;
            std::uniform_int_distribution<int> idx(0, static_cast<int>(w.size()) - 1);
            int i = idx(rng);
            const double h = 1e-5, saved = w[i];
            w[i] = saved + h;
            double up = objective_fn();
            w[i] = saved - h;
            double down = objective_fn();
            w[i] = saved;
            double numeric = -(up - down) / (2 * h); // grads hold d(-J)/dtheta
            double analytic = grads.weights[l].a[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            CHECK(std::abs(numeric - analytic) / denom <= 1e-4);
        }
    }
}

TEST_CASE("soft update with tau=1 copies the online networks") {
    DdpgConfig cfg = small_cfg();
    cfg.tau = 1.0;
    Agent agent(0, 4, -180.0, 180.0, cfg, 41);
    agent.actor().weights[0].at(0, 0) += 0.5;
    agent.critic().weights[0].at(0, 0) -= 0.25;
    agent.soft_update();
    CHECK(agent.target_actor().weights[0].a == agent.actor().weights[0].a);
    CHECK(agent.target_critic().weights[0].a == agent.critic().weights[0].a);
}

TEST_CASE("soft update blends half and half at tau=0.5") {
    DdpgConfig cfg = small_cfg();
    cfg.tau = 0.5;
    Agent agent(0, 4, -180.0, 180.0, cfg, 43);
    // scalar probe: theta=2, theta'=0 -> theta'=1
    agent.actor().weights[0].at(0, 0) = 2.0;
    agent.target_actor().weights[0].at(0, 0) = 0.0;
    agent.soft_update();
    CHECK(agent.target_actor().weights[0].at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("a vanishing tau leaves targets effectively unchanged") {
    DdpgConfig cfg = small_cfg();
    cfg.tau = 1e-12;
    Agent agent(0, 4, -180.0, 180.0, cfg, 47);
    double before = agent.target_actor().weights[0].at(0, 0);
    agent.actor().weights[0].at(0, 0) = before + 1000.0;
    agent.soft_update();
    CHECK(agent.target_actor().weights[0].at(0, 0) == doctest::Approx(before).epsilon(1e-6));
}

TEST_CASE("targets stay convex combinations of historical online values") {
    DdpgConfig cfg = small_cfg();
    cfg.tau = 0.25;
    Agent agent(0, 4, -180.0, 180.0, cfg, 53);
    double lo = 1e300, hi = -1e300;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double initial = agent.target_actor().weights[0].at(0, 0);
    lo = std::min(lo, initial);
    hi = std::max(hi, initial);
    for (int k = 0; k < 50; ++k) {
        double online = u(rng);
        agent.actor().weights[0].at(0, 0) = online;
        lo = std::min(lo, online);
        hi = std::max(hi, online);
        agent.soft_update();
        double target = agent.target_actor().weights[0].at(0, 0);
        CHECK(target >= lo - 1e-12);
        CHECK(target <= hi + 1e-12);
    }
}

TEST_CASE("updating one agent leaves another's parameters bit-identical") {
    DdpgConfig cfg = small_cfg();
    Agent a(0, 4, -180.0, 180.0, cfg, 61);
    Agent b(1, 4, -300.0, 300.0, cfg, 61);
    Mlp b_actor = b.actor(), b_critic = b.critic();
    std::vector<TransitionRecord> recs;
    for (int i = 0; i < 4; ++i) {
        recs.push_back(record({0.2 * i, 1.0, 0.4, 1.0}, 5.0 * i, -1.0, {0.2 * i, 1.0, 0.4, 1.0}));
    }
    auto batch = as_batch(recs);
    a.update_critic(batch);
    a.update_actor(batch);
    a.soft_update();
    for (size_t l = 0; l < b_actor.weights.size(); ++l) {
        CHECK(b.actor().weights[l].a == b_actor.weights[l].a);
        CHECK(b.critic().weights[l].a == b_critic.weights[l].a);
    }
}

TEST_CASE("agents constructed from the same master seed and id are identical") {
    // the per-agent streams depend only on (seed, id), not on how many other
    // agents exist
    DdpgConfig cfg = small_cfg();
    Agent from_small_fleet(2, 4, -180.0, 180.0, cfg, 99);
    Agent from_large_fleet(2, 4, -180.0, 180.0, cfg, 99);
    std::vector<double> obs{0.5, 1.0, 0.5, 1.0};
    CHECK(from_small_fleet.select_action(obs, true) == from_large_fleet.select_action(obs, true));
    for (size_t l = 0; l < from_small_fleet.actor().weights.size(); ++l) {
        CHECK(from_small_fleet.actor().weights[l].a == from_large_fleet.actor().weights[l].a);
    }
}

TEST_CASE("empty batches are rejected") {
    Agent agent(0, 4, -180.0, 180.0, small_cfg(), 67);
    std::vector<const TransitionRecord*> empty;
    CHECK_THROWS_AS(agent.update_critic(empty), Error);
    CHECK_THROWS_AS(agent.update_actor(empty), Error);
}
