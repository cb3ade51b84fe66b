#include "tracklearn/sac.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "tracklearn/binio.hpp"

namespace tracklearn {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  data_.resize(capacity_);
}

void ReplayBuffer::push(const Transition& t) {
  data_[head_] = t;
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at");
  return data_[(head_ + capacity_ - size_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch > size_) throw std::logic_error("ReplayBuffer: batch larger than stored data");
  std::vector<std::size_t> idx(batch);
  for (std::size_t& i : idx) i = rng.uniform_index(size_);
  return idx;
}

void ReplayBuffer::save(std::ostream& os) const {
  detail::write_u64(os, capacity_);
  detail::write_u64(os, size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& t = at(i);
    detail::write_doubles(os, t.obs.data(), t.obs.size());
    detail::write_double(os, t.action);
    detail::write_double(os, t.reward);
    detail::write_doubles(os, t.next_obs.data(), t.next_obs.size());
    detail::write_u64(os, t.done ? 1 : 0);
  }
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
  const std::uint64_t capacity = detail::read_u64(is);
  const std::uint64_t size = detail::read_u64(is);
  ReplayBuffer buf(capacity);
  for (std::uint64_t i = 0; i < size; ++i) {
    Transition t;
    detail::read_doubles(is, t.obs.data(), t.obs.size());
    t.action = detail::read_double(is);
    t.reward = detail::read_double(is);
    detail::read_doubles(is, t.next_obs.data(), t.next_obs.size());
    t.done = detail::read_u64(is) != 0;
    buf.push(t);
  }
  return buf;
}

bool ReplayBuffer::operator==(const ReplayBuffer& other) const {
  if (capacity_ != other.capacity_ || size_ != other.size_) return false;
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& a = at(i);
    const Transition& b = other.at(i);
    if (a.obs != b.obs || a.action != b.action || a.reward != b.reward ||
        a.next_obs != b.next_obs || a.done != b.done)
      return false;
  }
  return true;
}

void SacConfig::validate() const {
  if (actor_sizes.size() != 6)
    throw std::domain_error("SacConfig: actor must have 6 layers");
  if (actor_sizes.front() != Observation::kSize || actor_sizes.back() != 1)
    throw std::domain_error("SacConfig: actor must map 16 inputs to 1 output");
  if (critic_sizes.size() < 2 || critic_sizes.front() != Observation::kSize + 1 ||
      critic_sizes.back() != 1)
    throw std::domain_error("SacConfig: critics must map obs+action (17) to 1 output");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::domain_error("SacConfig: gamma in [0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::domain_error("SacConfig: tau in (0, 1]");
  if (!(lr0 > 0.0)) throw std::domain_error("SacConfig: lr0 must be > 0");
  if (batch_size <= 0) throw std::domain_error("SacConfig: batch_size must be > 0");
  if (buffer_capacity < static_cast<std::size_t>(batch_size))
    throw std::domain_error("SacConfig: buffer capacity below batch size");
  if (warmup_steps < 0) throw std::domain_error("SacConfig: warmup_steps must be >= 0");
  if (updates_per_step < 0) throw std::domain_error("SacConfig: updates_per_step must be >= 0");
  if (!(init_alpha > 0.0)) throw std::domain_error("SacConfig: init_alpha must be > 0");
}

namespace {

constexpr int kBlock = 32;          // fixed batch partition, independent of thread count
constexpr double kTanhEps = 1e-6;   // squash-correction epsilon
constexpr double kVarFloor = 1e-8;  // keeps the induced variance away from zero
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

int num_blocks(Eigen::Index n) {
  return static_cast<int>((n + kBlock - 1) / kBlock);
}

}  // namespace

SacAgent::SacAgent(const SacConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  actor_ = Mlp::random_init(cfg_.actor_sizes, rng);
  q1_ = Mlp::random_init(cfg_.critic_sizes, rng);
  q2_ = Mlp::random_init(cfg_.critic_sizes, rng);
  q1t_ = q1_;
  q2t_ = q2_;
  adam_actor_ = AdamState::like(actor_);
  adam_q1_ = AdamState::like(q1_);
  adam_q2_ = AdamState::like(q2_);
  const int features = cfg_.actor_sizes[cfg_.actor_sizes.size() - 2];
  log_std_ = Vec::Constant(features, cfg_.log_std_init);
  adam_log_std_ = AdamVec::like(log_std_);
  w_noise_ = Vec::Zero(features);
  log_alpha_ = std::log(cfg_.init_alpha);
  noise_reset(rng);
}

double SacAgent::alpha() const { return std::exp(log_alpha_); }

void SacAgent::noise_reset(Rng& rng) {
  for (Eigen::Index j = 0; j < w_noise_.size(); ++j)
    w_noise_(j) = std::exp(log_std_(j)) * rng.normal();
}

PolicySample SacAgent::policy_sample(const Observation& obs, PolicyMode mode) const {
  const Vec x = Eigen::Map<const Vec>(obs.values.data(), Observation::kSize);
  Mlp::Cache cache;
  const double mu = actor_.forward(x, &cache)(0);
  const Vec& phi = actor_.last_hidden(cache);
  const double var =
      (phi.array().square() * (2.0 * log_std_.array()).exp()).sum() + kVarFloor;
  double u = mu;
  if (mode == PolicyMode::Explore) u += w_noise_.dot(phi);
  const double eps = u - mu;
  const double a = std::tanh(u);
  PolicySample out;
  out.action = a;
  out.pre_squash = u;
  out.log_prob = -0.5 * eps * eps / var - 0.5 * kLog2Pi - 0.5 * std::log(var) -
                 std::log(1.0 - a * a + kTanhEps);
  return out;
}

SacAgent::Batch SacAgent::gather(const ReplayBuffer& buffer,
                                 const std::vector<std::size_t>& indices) {
  Batch b;
  const Eigen::Index B = static_cast<Eigen::Index>(indices.size());
  b.obs.resize(Observation::kSize, B);
  b.next_obs.resize(Observation::kSize, B);
  b.action.resize(B);
  b.reward.resize(B);
  b.done.resize(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Transition& t = buffer.at(indices[static_cast<std::size_t>(i)]);
    b.obs.col(i) = Eigen::Map<const Vec>(t.obs.data(), Observation::kSize);
    b.next_obs.col(i) = Eigen::Map<const Vec>(t.next_obs.data(), Observation::kSize);
    b.action(i) = t.action;
    b.reward(i) = t.reward;
    b.done(i) = t.done ? 1.0 : 0.0;
  }
  return b;
}

Vec SacAgent::critic_targets(const Batch& batch, int jobs) const {
  const Eigen::Index B = batch.size();
  Vec y(B);
  const int nb = num_blocks(B);
  const Eigen::ArrayXd s2 = (2.0 * log_std_.array()).exp();
  const double alpha_v = alpha();

#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
#endif
  for (int blk = 0; blk < nb; ++blk) {
    const Eigen::Index lo = static_cast<Eigen::Index>(blk) * kBlock;
    const Eigen::Index n = std::min<Eigen::Index>(kBlock, B - lo);
    const Mat sp = batch.next_obs.middleCols(lo, n);
    Mlp::BatchCache cache;
    const Mat mu = actor_.forward_batch(sp, &cache);
    const Mat& phi = actor_.last_hidden(cache);

    const Eigen::ArrayXd eps = (phi.transpose() * w_noise_).array();
    const Eigen::ArrayXd u = mu.row(0).transpose().array() + eps;
    const Eigen::ArrayXd a = u.tanh();
    const Eigen::ArrayXd var =
        (phi.array().square().matrix().transpose() * s2.matrix()).array() + kVarFloor;
    const Eigen::ArrayXd logp = -0.5 * eps.square() / var - 0.5 * kLog2Pi - 0.5 * var.log() -
                                (1.0 - a.square() + kTanhEps).log();

    Mat qin(Observation::kSize + 1, n);
    qin.topRows(Observation::kSize) = sp;
    qin.row(Observation::kSize) = a.matrix().transpose();
    const Eigen::ArrayXd q1v = q1t_.forward_batch(qin).row(0).transpose().array();
    const Eigen::ArrayXd q2v = q2t_.forward_batch(qin).row(0).transpose().array();

    for (Eigen::Index i = 0; i < n; ++i) {
      const double qmin = std::min(q1v(i), q2v(i));
      y(lo + i) = batch.reward(lo + i) +
                  cfg_.gamma * (1.0 - batch.done(lo + i)) * (qmin - alpha_v * logp(i));
    }
  }
  return y;
}

double SacAgent::critic_loss(const Batch& batch, const Vec& y, int which, Mlp::Grads* grads,
                             int jobs) const {
  const Mlp& q = (which == 1) ? q1_ : q2_;
  const Eigen::Index B = batch.size();
  const int nb = num_blocks(B);

  std::vector<Mlp::Grads> block_grads;
  if (grads) block_grads.assign(static_cast<std::size_t>(nb), q.zero_grads());
  Vec block_loss = Vec::Zero(nb);

#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
#endif
  for (int blk = 0; blk < nb; ++blk) {
    const Eigen::Index lo = static_cast<Eigen::Index>(blk) * kBlock;
    const Eigen::Index n = std::min<Eigen::Index>(kBlock, B - lo);
    Mat qin(Observation::kSize + 1, n);
    qin.topRows(Observation::kSize) = batch.obs.middleCols(lo, n);
    qin.row(Observation::kSize) = batch.action.segment(lo, n).transpose();
    Mlp::BatchCache cache;
    const Eigen::ArrayXd qv = q.forward_batch(qin, &cache).row(0).transpose().array();
    const Eigen::ArrayXd diff = qv - y.segment(lo, n).array();
    block_loss(blk) = diff.square().sum();
    if (grads) {
      Mat gout(1, n);
      gout.row(0) = (2.0 / static_cast<double>(B) * diff).matrix().transpose();
      q.backward_batch(cache, gout, &block_grads[static_cast<std::size_t>(blk)]);
    }
  }

  if (grads) {
    for (int blk = 0; blk < nb; ++blk) *grads += block_grads[static_cast<std::size_t>(blk)];
  }
  return block_loss.sum() / static_cast<double>(B);
}

double SacAgent::actor_loss(const Batch& batch, Mlp::Grads* grads_actor, Vec* grad_log_std,
                            double* mean_log_prob, double* mean_q, int jobs) const {
  const Eigen::Index B = batch.size();
  const int nb = num_blocks(B);
  const double alpha_v = alpha();
  const double invB = 1.0 / static_cast<double>(B);
  const Eigen::ArrayXd s2 = (2.0 * log_std_.array()).exp();
  const bool want_grads = grads_actor != nullptr;

  std::vector<Mlp::Grads> block_grads;
  if (want_grads) block_grads.assign(static_cast<std::size_t>(nb), actor_.zero_grads());
  Mat block_gls;  // per-block log-std gradient columns
  if (want_grads) block_gls = Mat::Zero(log_std_.size(), nb);
  Vec block_loss = Vec::Zero(nb);
  Vec block_logp = Vec::Zero(nb);
  Vec block_q = Vec::Zero(nb);

#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(std::max(jobs, 1)) if (jobs > 1)
#endif
  for (int blk = 0; blk < nb; ++blk) {
    const Eigen::Index lo = static_cast<Eigen::Index>(blk) * kBlock;
    const Eigen::Index n = std::min<Eigen::Index>(kBlock, B - lo);
    const Mat s = batch.obs.middleCols(lo, n);

    Mlp::BatchCache cache;
    const Mat muM = actor_.forward_batch(s, &cache);
    const Mat& phi = actor_.last_hidden(cache);

    const Eigen::ArrayXd eps = (phi.transpose() * w_noise_).array();
    const Eigen::ArrayXd u = muM.row(0).transpose().array() + eps;
    const Eigen::ArrayXd a = u.tanh();
    const Eigen::ArrayXd ta = 1.0 - a.square();
    const Eigen::ArrayXd var =
        (phi.array().square().matrix().transpose() * s2.matrix()).array() + kVarFloor;
    const Eigen::ArrayXd logp =
        -0.5 * eps.square() / var - 0.5 * kLog2Pi - 0.5 * var.log() - (ta + kTanhEps).log();

    Mat qin(Observation::kSize + 1, n);
    qin.topRows(Observation::kSize) = s;
    qin.row(Observation::kSize) = a.matrix().transpose();
    Mlp::BatchCache cq1, cq2;
    const Eigen::ArrayXd q1v = q1_.forward_batch(qin, &cq1).row(0).transpose().array();
    const Eigen::ArrayXd q2v = q2_.forward_batch(qin, &cq2).row(0).transpose().array();
    const Eigen::ArrayXd qmin = q1v.min(q2v);

    block_loss(blk) = (alpha_v * logp - qmin).sum();
    block_logp(blk) = logp.sum();
    block_q(blk) = qmin.sum();

    if (!want_grads) continue;

    // dL/da through the argmin critic; grad_out already carries the -1/B.
    Mat gout1 = Mat::Zero(1, n);
    Mat gout2 = Mat::Zero(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (q1v(i) <= q2v(i)) gout1(0, i) = -invB;
      else gout2(0, i) = -invB;
    }
    Mat gin1, gin2;
    q1_.backward_batch(cq1, gout1, nullptr, &gin1);
    q2_.backward_batch(cq2, gout2, nullptr, &gin2);
    const Eigen::ArrayXd gq_a =
        gin1.row(Observation::kSize).transpose().array() +
        gin2.row(Observation::kSize).transpose().array();

    const Eigen::ArrayXd dpe = -eps / var;                              // dlogp/deps
    const Eigen::ArrayXd dpv = 0.5 * eps.square() / var.square() - 0.5 / var;  // dlogp/dvar
    const Eigen::ArrayXd dpa = 2.0 * a / (ta + kTanhEps);               // dlogp/da
    const Eigen::ArrayXd g_u = (alpha_v * invB * dpa + gq_a) * ta;      // dL/du

    // dL/dphi: the exploration path (eps = w.phi and u = mu + eps), the
    // state-dependent variance, and nothing else.
    const Eigen::ArrayXd coef_w = alpha_v * invB * dpe + g_u;
    Mat g_phi = w_noise_ * coef_w.matrix().transpose();
    g_phi += (2.0 * alpha_v * invB) *
             ((phi.array().colwise() * s2).rowwise() * dpv.transpose()).matrix();

    block_gls.col(blk) = (2.0 * alpha_v * invB) *
                         ((phi.array().square().colwise() * s2).matrix() * dpv.matrix());

    Mat gout_actor(1, n);
    gout_actor.row(0) = g_u.matrix().transpose();
    actor_.backward_batch(cache, gout_actor, &block_grads[static_cast<std::size_t>(blk)], nullptr,
                          &g_phi);
  }

  if (want_grads) {
    for (int blk = 0; blk < nb; ++blk) *grads_actor += block_grads[static_cast<std::size_t>(blk)];
    if (grad_log_std) {
      *grad_log_std = Vec::Zero(log_std_.size());
      for (int blk = 0; blk < nb; ++blk) *grad_log_std += block_gls.col(blk);
    }
  }
  if (mean_log_prob) *mean_log_prob = block_logp.sum() * invB;
  if (mean_q) *mean_q = block_q.sum() * invB;
  return block_loss.sum() * invB;
}

double SacAgent::alpha_loss(double mean_log_prob, double* grad) const {
  const double g = -(mean_log_prob + cfg_.target_entropy);
  if (grad) *grad = g;
  return log_alpha_ * g;
}

void SacAgent::polyak_update() {
  const double tau = cfg_.tau;
  for (std::size_t l = 0; l < q1_.weights().size(); ++l) {
    q1t_.weights()[l] = (1.0 - tau) * q1t_.weights()[l] + tau * q1_.weights()[l];
    q1t_.biases()[l] = (1.0 - tau) * q1t_.biases()[l] + tau * q1_.biases()[l];
    q2t_.weights()[l] = (1.0 - tau) * q2t_.weights()[l] + tau * q2_.weights()[l];
    q2t_.biases()[l] = (1.0 - tau) * q2t_.biases()[l] + tau * q2_.biases()[l];
  }
}

LossReport SacAgent::update(ReplayBuffer& buffer, Rng& rng, double lr_now, int jobs) {
  if (buffer.size() < static_cast<std::size_t>(cfg_.batch_size))
    throw std::logic_error("SacAgent::update: buffer smaller than batch");

  const std::vector<std::size_t> idx =
      buffer.sample_indices(static_cast<std::size_t>(cfg_.batch_size), rng);
  const Batch batch = gather(buffer, idx);

  const Vec y = critic_targets(batch, jobs);

  LossReport report;
  Mlp::Grads g1 = q1_.zero_grads();
  Mlp::Grads g2 = q2_.zero_grads();
  report.q1_loss = critic_loss(batch, y, 1, &g1, jobs);
  report.q2_loss = critic_loss(batch, y, 2, &g2, jobs);
  adam_step(q1_, g1, adam_q1_, lr_now);
  adam_step(q2_, g2, adam_q2_, lr_now);

  Mlp::Grads ga = actor_.zero_grads();
  Vec gls;
  double mean_logp = 0.0;
  report.actor_loss = actor_loss(batch, &ga, &gls, &mean_logp, &report.mean_q, jobs);
  adam_step(actor_, ga, adam_actor_, lr_now);
  adam_step(log_std_, gls, adam_log_std_, lr_now);

  if (cfg_.learn_alpha) {
    double galpha = 0.0;
    report.alpha_loss = alpha_loss(mean_logp, &galpha);
    adam_step(log_alpha_, galpha, adam_alpha_, lr_now);
  }
  report.alpha = alpha();

  polyak_update();
  return report;
}

void SacConfig::save(std::ostream& os) const {
  detail::write_u64(os, actor_sizes.size());
  for (int s : actor_sizes) detail::write_u64(os, static_cast<std::uint64_t>(s));
  detail::write_u64(os, critic_sizes.size());
  for (int s : critic_sizes) detail::write_u64(os, static_cast<std::uint64_t>(s));
  detail::write_double(os, gamma);
  detail::write_double(os, tau);
  detail::write_double(os, lr0);
  detail::write_i64(os, batch_size);
  detail::write_u64(os, buffer_capacity);
  detail::write_i64(os, warmup_steps);
  detail::write_i64(os, updates_per_step);
  detail::write_double(os, target_entropy);
  detail::write_double(os, log_std_init);
  detail::write_double(os, init_alpha);
  detail::write_u64(os, learn_alpha ? 1 : 0);
}

SacConfig SacConfig::load(std::istream& is) {
  SacConfig cfg;
  cfg.actor_sizes.resize(detail::read_u64(is));
  for (int& s : cfg.actor_sizes) s = static_cast<int>(detail::read_u64(is));
  cfg.critic_sizes.resize(detail::read_u64(is));
  for (int& s : cfg.critic_sizes) s = static_cast<int>(detail::read_u64(is));
  cfg.gamma = detail::read_double(is);
  cfg.tau = detail::read_double(is);
  cfg.lr0 = detail::read_double(is);
  cfg.batch_size = static_cast<int>(detail::read_i64(is));
  cfg.buffer_capacity = detail::read_u64(is);
  cfg.warmup_steps = static_cast<int>(detail::read_i64(is));
  cfg.updates_per_step = static_cast<int>(detail::read_i64(is));
  cfg.target_entropy = detail::read_double(is);
  cfg.log_std_init = detail::read_double(is);
  cfg.init_alpha = detail::read_double(is);
  cfg.learn_alpha = detail::read_u64(is) != 0;
  return cfg;
}

namespace {

void write_vec(std::ostream& os, const Vec& v) {
  detail::write_u64(os, static_cast<std::uint64_t>(v.size()));
  detail::write_doubles(os, v.data(), static_cast<std::size_t>(v.size()));
}

Vec read_vec(std::istream& is) {
  Vec v(static_cast<Eigen::Index>(detail::read_u64(is)));
  detail::read_doubles(is, v.data(), static_cast<std::size_t>(v.size()));
  return v;
}

}  // namespace

void SacAgent::save(std::ostream& os) const {
  cfg_.save(os);
  actor_.save(os);
  q1_.save(os);
  q2_.save(os);
  q1t_.save(os);
  q2t_.save(os);
  adam_actor_.save(os);
  adam_q1_.save(os);
  adam_q2_.save(os);
  write_vec(os, log_std_);
  detail::write_i64(os, adam_log_std_.t);
  write_vec(os, adam_log_std_.m);
  write_vec(os, adam_log_std_.v);
  write_vec(os, w_noise_);
  detail::write_double(os, log_alpha_);
  detail::write_i64(os, adam_alpha_.t);
  detail::write_double(os, adam_alpha_.m);
  detail::write_double(os, adam_alpha_.v);
}

SacAgent SacAgent::load(std::istream& is) {
  SacAgent agent;
  agent.cfg_ = SacConfig::load(is);
  agent.actor_ = Mlp::load(is);
  agent.q1_ = Mlp::load(is);
  agent.q2_ = Mlp::load(is);
  agent.q1t_ = Mlp::load(is);
  agent.q2t_ = Mlp::load(is);
  agent.adam_actor_ = AdamState::load(is);
  agent.adam_q1_ = AdamState::load(is);
  agent.adam_q2_ = AdamState::load(is);
  agent.log_std_ = read_vec(is);
  agent.adam_log_std_.t = detail::read_i64(is);
  agent.adam_log_std_.m = read_vec(is);
  agent.adam_log_std_.v = read_vec(is);
  agent.w_noise_ = read_vec(is);
  agent.log_alpha_ = detail::read_double(is);
  agent.adam_alpha_.t = detail::read_i64(is);
  agent.adam_alpha_.m = detail::read_double(is);
  agent.adam_alpha_.v = detail::read_double(is);
  return agent;
}

bool SacAgent::operator==(const SacAgent& other) const {
  return cfg_ == other.cfg_ && actor_ == other.actor_ && q1_ == other.q1_ && q2_ == other.q2_ &&
         q1t_ == other.q1t_ && q2t_ == other.q2t_ && adam_actor_ == other.adam_actor_ &&
         adam_q1_ == other.adam_q1_ && adam_q2_ == other.adam_q2_ && log_std_ == other.log_std_ &&
         adam_log_std_ == other.adam_log_std_ && w_noise_ == other.w_noise_ &&
         log_alpha_ == other.log_alpha_ && adam_alpha_ == other.adam_alpha_;
}

}  // namespace tracklearn
