#ifndef AMENABLE_RL_HPP_
#define AMENABLE_RL_HPP_

#include <span>
#include <string>
#include <vector>

#include "amenable/controller.hpp"
#include "amenable/data.hpp"
#include "amenable/nn.hpp"
#include "amenable/rng.hpp"

namespace amenable {

// One environment step: a scored batch, the sampled selection, and the
// emitted reward (dense in single-env mode, sparse-at-done in meta mode).
struct StepRecord {
  std::vector<int> batch;       // sample indices into the environment dataset
  std::vector<double> scores;   // h_i at collection time
  std::vector<int> actions;     // a_i in {0,1}
  double log_prob_old = 0.0;    // joint Bernoulli log-likelihood at collection
  double reward = 0.0;          // emitted reward
  double r_tilde = 0.0;         // raw strategy reward (pre-clipping)
  bool done = false;
  double val_metric = 0.0;      // mean val metric before this step's update
};

struct Episode {
  // recurrent controllers: state entering the episode (BPTT truncates here)
  std::vector<double> mem_h0, mem_c0;
  StepContext entry_ctx;
  std::vector<StepRecord> steps;
};

struct Trajectory {
  std::vector<Episode> episodes;
  void validate() const;  // finite rewards, one done per episode
};

// Q_t = sum_{k>=0} gamma^k R_{t+k} within the episode
std::vector<double> discounted_returns(std::span<const double> rewards,
                                       double gamma);

// context entering sample i of step t, reconstructed from the episode records
// (must agree with the threading done at collection time)
StepContext episode_context(const Episode& ep, int t, int i);

struct PPOConfig {
  double clip_ratio = 0.2;
  int epochs = 4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr_policy = 1e-3;
  double lr_value = 1e-3;
};

struct DDPGConfig {
  int buffer_capacity = 50000;
  int batch_size = 64;
  double tau = 0.01;
  double exploration_noise_std = 0.1;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double gamma = 0.99;
};

// State-value network: per-sample image embedding, mean-pooled, concatenated
// with the current mean validation metric.
class ValueNet {
 public:
  ValueNet() = default;
  static ValueNet create(int height, int width, int embed_dim, int hidden,
                         Rng& init_rng);

  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }

  struct Trace {
    std::vector<nn::Mlp::Trace> embeds;
    nn::Mlp::Trace head;
    double value = 0.0;
  };

  double value(const Dataset& ds, std::span<const int> batch,
               double val_metric, Trace* trace = nullptr) const;
  void backward(const Trace& trace, double dvalue, std::span<double> grad) const;

  void save(const std::string& path) const;
  static ValueNet load(const std::string& path);

 private:
  int height_ = 0, width_ = 0, embed_dim_ = 0, hidden_ = 0;
  nn::Mlp embed_, head_;
  std::vector<float> params_;
  void build_layers();
};

// Clipped-surrogate PPO. Per-sample ratios share their time-step's
// GAE advantage; value targets are the GAE returns.
class PpoUpdater {
 public:
  explicit PpoUpdater(PPOConfig cfg) : config(cfg) {}

  PPOConfig config;
  nn::AdamState policy_adam, value_adam;

  void update(Controller& controller, ValueNet& critic, const Trajectory& traj,
              const Dataset& ds);

  // surrogate policy gradient at the current parameters (one epoch, no step);
  // exposed for gradient-equality tests
  std::vector<double> policy_gradient(const Controller& controller,
                                      ValueNet& critic, const Trajectory& traj,
                                      const Dataset& ds) const;
};

// Q(s,a) over [image | val_metric | action].
class QNet {
 public:
  QNet() = default;
  static QNet create(int height, int width, int hidden, Rng& init_rng);

  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }

  double q(std::span<const float> image, double val_metric, double action,
           nn::Mlp::Trace* trace = nullptr) const;
  // returns dQ/da; accumulates into grad when non-empty
  double backward(const nn::Mlp::Trace& trace, double dq,
                  std::span<double> grad) const;

 private:
  int height_ = 0, width_ = 0, hidden_ = 0;
  nn::Mlp net_;
  std::vector<float> params_;
};

struct DdpgTransition {
  int sample_index = -1;       // state: train sample + current val metric
  float val_metric = 0.0f;
  float action = 0.0f;         // explored score in [0,1]
  float reward = 0.0f;
  int next_sample_index = -1;  // next element of the sample stream
  float next_val_metric = 0.0f;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(const DdpgTransition& t);
  int size() const { return static_cast<int>(storage_.size()); }
  int capacity() const { return capacity_; }
  const DdpgTransition& at(int i) const { return storage_[i]; }

 private:
  int capacity_;
  int write_pos_ = 0;
  std::vector<DdpgTransition> storage_;
};

// Standard DDPG with target networks; the actor is the feed-forward
// controller, exploration adds clipped Gaussian noise to its scores.
class DdpgUpdater {
 public:
  DdpgUpdater(DDPGConfig cfg, const Controller& actor, const QNet& critic);

  DDPGConfig config;
  Controller target_actor;
  QNet target_critic;
  nn::AdamState actor_adam, critic_adam;

  // one gradient update on a sampled minibatch; requires buffer >= batch_size
  void update(Controller& actor, QNet& critic, const Dataset& ds,
              const ReplayBuffer& buffer, Rng& rng);

  void soft_update(const Controller& actor, const QNet& critic);
};

}  // namespace amenable

#endif  // AMENABLE_RL_HPP_
