#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tracklearn/env.hpp"
#include "tracklearn/mlp.hpp"
#include "tracklearn/rng.hpp"

namespace tracklearn {

struct Transition {
  std::array<double, Observation::kSize> obs{};
  double action = 0.0;  // normalized, [-1, 1]
  double reward = 0.0;
  std::array<double, Observation::kSize> next_obs{};
  // True only for genuine safety terminations. Time-limit and path-end
  // truncations store false so the critic target still bootstraps.
  bool done = false;
};

/// Uniform-sampling ring buffer of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  /// Logical index 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

  void save(std::ostream& os) const;
  static ReplayBuffer load(std::istream& is);
  bool operator==(const ReplayBuffer& other) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

struct SacConfig {
  std::vector<int> actor_sizes = {Observation::kSize, 64, 64, 64, 64, 1};
  std::vector<int> critic_sizes = {Observation::kSize + 1, 64, 64, 64, 1};
  double gamma = 0.99;
  double tau = 0.005;
  double lr0 = 3e-4;
  int batch_size = 256;
  std::size_t buffer_capacity = 300000;
  int warmup_steps = 5000;
  int updates_per_step = 1;
  double target_entropy = -1.0;  // = -action dim
  double log_std_init = -2.5;
  double init_alpha = 0.1;
  bool learn_alpha = true;

  void validate() const;
  void save(std::ostream& os) const;
  static SacConfig load(std::istream& is);
  bool operator==(const SacConfig& other) const = default;
};

enum class PolicyMode { Explore, Deterministic };

struct PolicySample {
  double action = 0.0;    // tanh-squashed, (-1, 1)
  double log_prob = 0.0;  // density of the squashed action
  double pre_squash = 0.0;
};

struct LossReport {
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double mean_q = 0.0;
};

/// Soft actor-critic with twin critics, learned temperature and gSDE-style
/// exploration: the pre-squash noise is W_noise . phi(obs) with phi the last
/// hidden activations of the actor and W_noise resampled once per episode.
class SacAgent {
 public:
  SacAgent() = default;
  SacAgent(const SacConfig& cfg, Rng& rng);

  const SacConfig& config() const { return cfg_; }

  /// Draw an action. Explore uses the held exploration matrix, so a fixed
  /// observation maps to a fixed action for the whole episode.
  PolicySample policy_sample(const Observation& obs, PolicyMode mode) const;

  /// Resample the exploration weights from the current log-std.
  void noise_reset(Rng& rng);

  /// One SAC gradient step on a sampled minibatch: twin-critic regression to
  /// the entropy-regularized target, actor ascent on min-Q, temperature
  /// update, polyak target blend. jobs > 1 parallelizes over fixed batch
  /// blocks and is bit-identical to jobs = 1.
  LossReport update(ReplayBuffer& buffer, Rng& rng, double lr_now, int jobs = 1);

  // --- internals exposed for oracles and the gradient-check suite ---

  struct Batch {
    Mat obs;       // kSize x B
    Vec action;    // B
    Vec reward;    // B
    Mat next_obs;  // kSize x B
    Vec done;      // B, 1.0 = terminal
    Eigen::Index size() const { return action.size(); }
  };

  static Batch gather(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices);

  /// y = r + gamma (1-done) (min(Q1t, Q2t)(s', a') - alpha log pi(a'|s')).
  Vec critic_targets(const Batch& batch, int jobs = 1) const;

  /// Mean squared error of one critic against y; gradients optional.
  double critic_loss(const Batch& batch, const Vec& y, int which, Mlp::Grads* grads,
                     int jobs = 1) const;

  /// E[alpha log pi(a|s) - min Q(s, a)] with reparameterized actions;
  /// gradients for the actor and the log-std vector optional.
  double actor_loss(const Batch& batch, Mlp::Grads* grads_actor, Vec* grad_log_std,
                    double* mean_log_prob, double* mean_q, int jobs = 1) const;

  /// -log_alpha (mean_log_prob + target_entropy), log-prob detached.
  double alpha_loss(double mean_log_prob, double* grad) const;

  void polyak_update();

  double alpha() const;
  double log_alpha() const { return log_alpha_; }

  Mlp& actor() { return actor_; }
  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& q1_target() { return q1t_; }
  Mlp& q2_target() { return q2t_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& q1() const { return q1_; }
  const Mlp& q2() const { return q2_; }
  const Mlp& q1_target() const { return q1t_; }
  const Mlp& q2_target() const { return q2t_; }
  Vec& log_std() { return log_std_; }
  const Vec& log_std() const { return log_std_; }
  const Vec& noise_weights() const { return w_noise_; }

  void save(std::ostream& os) const;
  static SacAgent load(std::istream& is);
  bool operator==(const SacAgent& other) const;

 private:
  SacConfig cfg_;
  Mlp actor_, q1_, q2_, q1t_, q2t_;
  AdamState adam_actor_, adam_q1_, adam_q2_;
  Vec log_std_;   // per last-hidden feature
  AdamVec adam_log_std_;
  Vec w_noise_;   // held exploration weights, one row (single action)
  double log_alpha_ = 0.0;
  AdamScalar adam_alpha_;
};

}  // namespace tracklearn
