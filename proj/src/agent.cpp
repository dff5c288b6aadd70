#include "agent.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace socbal {

void DdpgConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("learning: gamma must be in [0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw Error("learning: tau must be in (0,1]");
    if (batch_size < 1) throw Error("learning: batch_size must be >= 1");
    if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw Error("learning: learning rates must be > 0");
    if (replay_capacity < 1) throw Error("learning: replay_capacity must be >= 1");
    if (learn_start < batch_size) throw Error("learning: learn_start must be >= batch_size");
    if (noise_sigma_kw < 0.0) throw Error("learning: noise_sigma_kw must be >= 0");
    if (!(noise_decay > 0.0 && noise_decay <= 1.0)) throw Error("learning: noise_decay must be in (0,1]");
    if (hidden_dims.empty()) throw Error("learning: hidden_dims must not be empty");
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw Error("replay buffer: capacity must be >= 1");
    records_.reserve(std::min(capacity, 1 << 20));
}

void ReplayBuffer::push(TransitionRecord rec) {
    if (static_cast<int>(records_.size()) < capacity_) {
        records_.push_back(std::move(rec));
    } else {
        records_[head_] = std::move(rec); // overwrite the oldest
        head_ = (head_ + 1) % records_.size();
    }
}

std::vector<const TransitionRecord*> ReplayBuffer::sample(int k, std::mt19937_64& rng) const {
    const int n = size();
    if (k < 1) throw Error("replay buffer: sample size must be >= 1");
    if (k > n) {
        throw Error("replay buffer: asked for " + std::to_string(k) + " records but only " +
                    std::to_string(n) + " stored");
    }
    // Floyd's sampling: k distinct indices, uniform over subsets.
    std::vector<int> picked;
    picked.reserve(k);
    for (int j = n - k; j < n; ++j) {
        std::uniform_int_distribution<int> dist(0, j);
        int idx = dist(rng);
        if (std::find(picked.begin(), picked.end(), idx) != picked.end()) idx = j;
        picked.push_back(idx);
    }
    std::vector<const TransitionRecord*> out;
    out.reserve(k);
    for (int idx : picked) out.push_back(&records_[idx]);
    return out;
}

Agent::Agent(int id, int obs_dim, double action_lower_kw, double action_upper_kw,
             const DdpgConfig& cfg, uint64_t master_seed)
    : id_(id),
      obs_dim_(obs_dim),
      lower_(action_lower_kw),
      upper_(action_upper_kw),
      cfg_(cfg),
      noise_sigma_(cfg.noise_sigma_kw),
      buffer_(cfg.replay_capacity),
      noise_rng_(make_engine(master_seed, "agent.noise", static_cast<uint64_t>(id))),
      replay_rng_(make_engine(master_seed, "agent.replay", static_cast<uint64_t>(id))) {
    cfg_.validate();
    if (obs_dim < 2) throw Error("agent: observation dim must be >= 2");
    if (!(lower_ < upper_)) throw Error("agent: action range must satisfy lower < upper");
    power_scale_ = std::max(std::abs(lower_), std::abs(upper_));

    std::vector<int> actor_dims{obs_dim};
    actor_dims.insert(actor_dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    actor_dims.push_back(1);
    std::vector<int> critic_dims{obs_dim + 1};
    critic_dims.insert(critic_dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    critic_dims.push_back(1);

    auto init_rng = make_engine(master_seed, "agent.init", static_cast<uint64_t>(id));
    actor_ = make_mlp(actor_dims, cfg.hidden_activation, Activation::Tanh, init_rng);
    critic_ = make_mlp(critic_dims, cfg.hidden_activation, Activation::Identity, init_rng);
    target_actor_ = actor_;
    target_critic_ = critic_;
    actor_opt_ = make_adam(actor_, cfg.actor_lr);
    critic_opt_ = make_adam(critic_, cfg.critic_lr);
    actor_grads_ = make_grads(actor_);
    critic_grads_ = make_grads(critic_);
    input_buf_.resize(obs_dim + 1);
    input_grad_buf_.resize(obs_dim + 1);
}

void Agent::fill_normalized(std::span<const double> obs, std::span<double> out) const {
    if (static_cast<int>(obs.size()) != obs_dim_) {
        throw Error("agent " + std::to_string(id_) + ": observation has " +
                    std::to_string(obs.size()) + " entries, expected " + std::to_string(obs_dim_));
    }
    std::copy(obs.begin(), obs.end(), out.begin());
    out[1] /= power_scale_; // own demand
    if (obs_dim_ - 1 != 1) out[obs_dim_ - 1] /= power_scale_; // estimated mean demand
}

std::vector<double> Agent::normalized_obs(std::span<const double> obs) const {
    std::vector<double> v(obs_dim_);
    fill_normalized(obs, v);
    return v;
}

double Agent::map_to_action_kw(double tanh_out) const {
    return lower_ + (tanh_out + 1.0) * 0.5 * (upper_ - lower_);
}

double Agent::actor_forward_kw(const Mlp& actor, std::span<const double> obs, MlpWorkspace& ws) {
    norm_buf_.resize(obs_dim_);
    fill_normalized(obs, norm_buf_);
    forward(actor, norm_buf_, ws);
    return map_to_action_kw(ws.output()[0]);
}

double Agent::critic_forward(const Mlp& critic, std::span<const double> obs, double action_kw,
                             MlpWorkspace& ws) {
    fill_normalized(obs, std::span<double>(input_buf_.data(), obs_dim_));
    input_buf_[obs_dim_] = action_kw / power_scale_;
    forward(critic, input_buf_, ws);
    return ws.output()[0];
}

double Agent::select_action(std::span<const double> obs, bool explore) {
    double a = actor_forward_kw(actor_, obs, ws_a_);
    if (explore && noise_sigma_ > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sigma_);
        a += noise(noise_rng_);
    }
    return a;
}

bool Agent::ready_to_learn() const {
    return buffer_.size() >= std::max(cfg_.learn_start, cfg_.batch_size);
}

double Agent::td_target(double avg_reward, std::span<const double> next_obs) {
    double next_action = actor_forward_kw(target_actor_, next_obs, ws_a_);
    double q_next = critic_forward(target_critic_, next_obs, next_action, ws_c_);
    return avg_reward + cfg_.gamma * q_next;
}

double Agent::q_value(std::span<const double> obs, double action_kw) {
    return critic_forward(critic_, obs, action_kw, ws_c_);
}

double Agent::critic_loss_and_grad(std::span<const TransitionRecord* const> batch,
                                   MlpGrads& grads) {
    if (batch.empty()) throw Error("update_critic: empty batch");
    grads.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    double upstream[1];
    for (const TransitionRecord* rec : batch) {
        double y = td_target(rec->avg_reward, rec->next_observation);
        double q = critic_forward(critic_, rec->observation, rec->action_kw, ws_c_);
        double err = q - y;
        loss += err * err;
        upstream[0] = 2.0 * err * inv_m;
        backward(critic_, ws_c_, std::span<const double>(upstream, 1), grads, ws_scratch_);
    }
    return loss * inv_m;
}

double Agent::actor_objective_and_grad(std::span<const TransitionRecord* const> batch,
                                       MlpGrads& grads) {
    if (batch.empty()) throw Error("update_actor: empty batch");
    grads.zero();
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    const double act_span = 0.5 * (upper_ - lower_);
    double objective = 0.0;
    double upstream[1];
    for (const TransitionRecord* rec : batch) {
        norm_buf_.resize(obs_dim_);
        fill_normalized(rec->observation, norm_buf_);
        forward(actor_, norm_buf_, ws_a_);
        double a_kw = map_to_action_kw(ws_a_.output()[0]);
        objective += critic_forward(critic_, rec->observation, a_kw, ws_c_);
        upstream[0] = 1.0;
        backward_input(critic_, ws_c_, std::span<const double>(upstream, 1), ws_scratch_,
                       input_grad_buf_);
        // chain rule: critic saw a/power_scale, the actor's tanh spans the
        // action range; ascent happens by handing Adam the negated gradient
        double dq_da_kw = input_grad_buf_[obs_dim_] / power_scale_;
        upstream[0] = -dq_da_kw * act_span * inv_m;
        backward(actor_, ws_a_, std::span<const double>(upstream, 1), grads, ws_scratch_);
    }
    return objective * inv_m;
}

double Agent::update_critic(std::span<const TransitionRecord* const> batch) {
    double loss = critic_loss_and_grad(batch, critic_grads_);
    optimizer_step(critic_opt_, critic_, critic_grads_);
    return loss;
}

double Agent::update_actor(std::span<const TransitionRecord* const> batch) {
    double objective = actor_objective_and_grad(batch, actor_grads_);
    optimizer_step(actor_opt_, actor_, actor_grads_);
    return objective;
}

namespace {
void blend(const Mlp& online, Mlp& target, double tau) {
    for (size_t l = 0; l < online.weights.size(); ++l) {
        const auto& w = online.weights[l].a;
        auto& tw = target.weights[l].a;
        for (size_t i = 0; i < w.size(); ++i) tw[i] = tau * w[i] + (1.0 - tau) * tw[i];
        const auto& b = online.biases[l];
        auto& tb = target.biases[l];
        for (size_t i = 0; i < b.size(); ++i) tb[i] = tau * b[i] + (1.0 - tau) * tb[i];
    }
}
} // namespace

void Agent::soft_update() {
    blend(actor_, target_actor_, cfg_.tau);
    blend(critic_, target_critic_, cfg_.tau);
}

std::pair<double, double> Agent::learn() {
    auto batch = buffer_.sample(cfg_.batch_size, replay_rng_);
    double critic_loss = update_critic(batch);
    double actor_obj = update_actor(batch);
    return {critic_loss, actor_obj};
}

} // namespace socbal
