#pragma once

#include <random>
#include <span>
#include <vector>

#include "mlp.hpp"

namespace socbal {

/// Learning defaults shared by every agent. The paper-style table values
/// (learning rate, buffer size, initial noise) plus the gaps filled as
/// documented configuration defaults.
struct DdpgConfig {
    double gamma = 0.99;
    double tau = 0.005;
    int batch_size = 64;
    double actor_lr = 0.001;
    double critic_lr = 0.001;
    int replay_capacity = 30000;
    int learn_start = 1000; // minimum buffer fill before updates begin
    double noise_sigma_kw = 5.0;
    double noise_decay = 0.999; // per-episode multiplier
    std::vector<int> hidden_dims = {64, 64};
    Activation hidden_activation = Activation::Relu;

    void validate() const;
};

/// One stored step: flattened observations, the executed (post-balance)
/// power, and the consensus-averaged reward.
struct TransitionRecord {
    std::vector<double> observation;
    double action_kw = 0.0;
    double avg_reward = 0.0;
    std::vector<double> next_observation;
};

/// Bounded FIFO experience store with uniform without-replacement sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity);

    void push(TransitionRecord rec);
    /// k distinct uniformly chosen indices resolved to records. Throws if
    /// fewer than k records are stored.
    std::vector<const TransitionRecord*> sample(int k, std::mt19937_64& rng) const;

    int size() const { return static_cast<int>(records_.size()); }
    int capacity() const { return capacity_; }
    const TransitionRecord& at(int i) const { return records_[(head_ + i) % records_.size()]; }

private:
    int capacity_;
    size_t head_ = 0; // index of the oldest record once full
    std::vector<TransitionRecord> records_;
};

/// One DDPG learner bound to one storage unit. Holds the four networks, the
/// replay buffer, and this agent's private RNG streams; nothing here touches
/// another agent's state.
class Agent {
public:
    Agent(int id, int obs_dim, double action_lower_kw, double action_upper_kw,
          const DdpgConfig& cfg, uint64_t master_seed);

    int id() const { return id_; }
    int obs_dim() const { return obs_dim_; }
    double noise_sigma_kw() const { return noise_sigma_; }
    void decay_noise() { noise_sigma_ *= cfg_.noise_decay; }

    /// Deterministic policy output mapped affinely from (-1,1) onto the
    /// action range, plus Gaussian exploration noise when explore is set.
    /// Range enforcement after the noise is the demand-balance stage's job.
    double select_action(std::span<const double> obs, bool explore);

    void store(TransitionRecord rec) { buffer_.push(std::move(rec)); }
    bool ready_to_learn() const;

    /// y = r + gamma * Q'(o', pi'(o')); target networks only.
    double td_target(double avg_reward, std::span<const double> next_obs);

    /// Critic value for a raw observation and an action in kW.
    double q_value(std::span<const double> obs, double action_kw);

    /// Mean squared TD error over the batch and its gradient w.r.t. the
    /// critic parameters (accumulated into grads, which is zeroed first).
    double critic_loss_and_grad(std::span<const TransitionRecord* const> batch, MlpGrads& grads);

    /// Mean Q(o, pi(o)) over the batch; grads receives the gradient of the
    /// NEGATED objective so a descent step ascends the objective.
    double actor_objective_and_grad(std::span<const TransitionRecord* const> batch,
                                    MlpGrads& grads);

    /// One Adam step on the mean squared TD error; returns the pre-step loss.
    double update_critic(std::span<const TransitionRecord* const> batch);

    /// One ascent step on mean Q(o, pi(o)); returns the pre-step objective.
    /// Critic parameters are left untouched.
    double update_actor(std::span<const TransitionRecord* const> batch);

    /// theta' <- tau*theta + (1-tau)*theta' for both target networks.
    void soft_update();

    /// Samples a batch and runs critic update, actor update.
    std::pair<double, double> learn();

    const DdpgConfig& config() const { return cfg_; }
    ReplayBuffer& buffer() { return buffer_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    Mlp& actor() { return actor_; }
    Mlp& critic() { return critic_; }
    Mlp& target_actor() { return target_actor_; }
    Mlp& target_critic() { return target_critic_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    const Mlp& target_actor() const { return target_actor_; }
    const Mlp& target_critic() const { return target_critic_; }

    double action_lower_kw() const { return lower_; }
    double action_upper_kw() const { return upper_; }

    /// Normalized net input for an observation (demand entries are scaled by
    /// the unit's power rating so every feature is O(1)).
    std::vector<double> normalized_obs(std::span<const double> obs) const;
    double map_to_action_kw(double tanh_out) const;

private:
    void fill_normalized(std::span<const double> obs, std::span<double> out) const;
    double actor_forward_kw(const Mlp& actor, std::span<const double> obs, MlpWorkspace& ws);
    double critic_forward(const Mlp& critic, std::span<const double> obs, double action_kw,
                          MlpWorkspace& ws);

    int id_;
    int obs_dim_;
    double lower_;
    double upper_;
    double power_scale_; // feature scale for demand and action entries
    DdpgConfig cfg_;
    double noise_sigma_;
    Mlp actor_, critic_, target_actor_, target_critic_;
    AdamState actor_opt_, critic_opt_;
    ReplayBuffer buffer_;
    std::mt19937_64 noise_rng_;
    std::mt19937_64 replay_rng_;

    // scratch reused across updates
    MlpWorkspace ws_a_, ws_c_, ws_scratch_;
    MlpGrads actor_grads_, critic_grads_;
    std::vector<double> input_buf_, input_grad_buf_, norm_buf_;
};

} // namespace socbal
