#include "tracklearn/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "tracklearn/binio.hpp"

namespace tracklearn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output layer");
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.emplace_back(Mat::Zero(sizes_[l + 1], sizes_[l]));
    biases_.emplace_back(Vec::Zero(sizes_[l + 1]));
  }
}

Mlp Mlp::random_init(std::vector<int> sizes, Rng& rng) {
  Mlp net(std::move(sizes));
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    Mat& W = net.weights_[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
    Vec& b = net.biases_[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rng.uniform(-bound, bound);
  }
  return net;
}

Mlp::Grads& Mlp::Grads::operator+=(const Grads& other) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l] += other.W[l];
    b[l] += other.b[l];
  }
  return *this;
}

void Mlp::Grads::scale(double f) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l] *= f;
    b[l] *= f;
  }
}

Mlp::Grads Mlp::zero_grads() const {
  Grads g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.W.emplace_back(Mat::Zero(weights_[l].rows(), weights_[l].cols()));
    g.b.emplace_back(Vec::Zero(biases_[l].size()));
  }
  return g;
}

Vec Mlp::forward(const Vec& x, Cache* cache) const {
  if (x.size() != input_size()) throw std::invalid_argument("Mlp::forward: input size mismatch");
  if (cache) {
    cache->input = x;
    cache->act.clear();
  }
  Vec h = x;
  const std::size_t n = weights_.size();
  for (std::size_t l = 0; l < n; ++l) {
    Vec z = weights_[l] * h + biases_[l];
    if (l + 1 < n) {
      h = z.array().tanh();
      if (cache) cache->act.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Mat Mlp::forward_batch(const Mat& X, BatchCache* cache) const {
  if (X.rows() != input_size()) throw std::invalid_argument("Mlp::forward_batch: input size mismatch");
  if (cache) {
    cache->input = X;
    cache->act.clear();
  }
  Mat h = X;
  const std::size_t n = weights_.size();
  for (std::size_t l = 0; l < n; ++l) {
    Mat z = (weights_[l] * h).colwise() + biases_[l];
    if (l + 1 < n) {
      h = z.array().tanh();
      if (cache) cache->act.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Vec& grad_out, Grads* grads, Vec* grad_input,
                   const Vec* grad_last_hidden) const {
  const int n = num_affine();
  if (static_cast<int>(cache.act.size()) != n - 1)
    throw std::invalid_argument("Mlp::backward: cache does not match this net");

  Vec delta = grad_out;  // dL/dz at the current layer (output layer is linear)
  for (int l = n - 1; l >= 0; --l) {
    const Vec& a_in = (l == 0) ? cache.input : cache.act[static_cast<std::size_t>(l) - 1];
    if (grads) {
      grads->W[static_cast<std::size_t>(l)].noalias() += delta * a_in.transpose();
      grads->b[static_cast<std::size_t>(l)] += delta;
    }
    if (l == 0) {
      if (grad_input) grad_input->noalias() = weights_[0].transpose() * delta;
      break;
    }
    Vec da = weights_[static_cast<std::size_t>(l)].transpose() * delta;  // dL/d(act_{l-1})
    if (grad_last_hidden && l == n - 1) da += *grad_last_hidden;
    const Vec& a = cache.act[static_cast<std::size_t>(l) - 1];
    delta = da.array() * (1.0 - a.array().square());
  }
}

void Mlp::backward_batch(const BatchCache& cache, const Mat& grad_out, Grads* grads,
                         Mat* grad_input, const Mat* grad_last_hidden) const {
  const int n = num_affine();
  if (static_cast<int>(cache.act.size()) != n - 1)
    throw std::invalid_argument("Mlp::backward_batch: cache does not match this net");

  Mat delta = grad_out;
  for (int l = n - 1; l >= 0; --l) {
    const Mat& a_in = (l == 0) ? cache.input : cache.act[static_cast<std::size_t>(l) - 1];
    if (grads) {
      grads->W[static_cast<std::size_t>(l)].noalias() += delta * a_in.transpose();
      grads->b[static_cast<std::size_t>(l)] += delta.rowwise().sum();
    }
    if (l == 0) {
      if (grad_input) grad_input->noalias() = weights_[0].transpose() * delta;
      break;
    }
    Mat da = weights_[static_cast<std::size_t>(l)].transpose() * delta;
    if (grad_last_hidden && l == n - 1) da += *grad_last_hidden;
    const Mat& a = cache.act[static_cast<std::size_t>(l) - 1];
    delta = da.array() * (1.0 - a.array().square());
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<std::size_t>(weights_[l].size()) + static_cast<std::size_t>(biases_[l].size());
  return n;
}

std::vector<double> Mlp::flatten_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Mat& W = weights_[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) flat.push_back(W(r, c));
    const Vec& b = biases_[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) flat.push_back(b(r));
  }
  return flat;
}

void Mlp::unflatten_params(const std::vector<double>& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("Mlp::unflatten_params: size mismatch");
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Mat& W = weights_[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[i++];
    Vec& b = biases_[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = flat[i++];
  }
}

std::vector<double> Mlp::flatten_grads(const Grads& grads) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.W.size(); ++l) {
    const Mat& W = grads.W[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) flat.push_back(W(r, c));
    const Vec& b = grads.b[l];
    for (Eigen::Index r = 0; r < b.size(); ++r) flat.push_back(b(r));
  }
  return flat;
}

void Mlp::save(std::ostream& os) const {
  detail::write_u64(os, sizes_.size());
  for (int s : sizes_) detail::write_u64(os, static_cast<std::uint64_t>(s));
  const std::vector<double> flat = flatten_params();
  detail::write_doubles(os, flat.data(), flat.size());
}

Mlp Mlp::load(std::istream& is) {
  const std::uint64_t n = detail::read_u64(is);
  std::vector<int> sizes(n);
  for (auto& s : sizes) s = static_cast<int>(detail::read_u64(is));
  Mlp net(std::move(sizes));
  std::vector<double> flat(net.param_count());
  detail::read_doubles(is, flat.data(), flat.size());
  net.unflatten_params(flat);
  return net;
}

bool Mlp::operator==(const Mlp& other) const {
  if (sizes_ != other.sizes_) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
  }
  return true;
}

AdamState AdamState::like(const Mlp& net) {
  AdamState st;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    st.mW.emplace_back(Mat::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    st.vW.emplace_back(Mat::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    st.mb.emplace_back(Vec::Zero(net.biases()[l].size()));
    st.vb.emplace_back(Vec::Zero(net.biases()[l].size()));
  }
  return st;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

void adam_step(Mlp& net, const Mlp::Grads& grads, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    state.mW[l] = kBeta1 * state.mW[l] + (1.0 - kBeta1) * grads.W[l];
    state.vW[l] = kBeta2 * state.vW[l] + (1.0 - kBeta2) * grads.W[l].array().square().matrix();
    net.weights()[l].array() -=
        lr * (state.mW[l].array() / bc1) / ((state.vW[l].array() / bc2).sqrt() + kAdamEps);
    state.mb[l] = kBeta1 * state.mb[l] + (1.0 - kBeta1) * grads.b[l];
    state.vb[l] = kBeta2 * state.vb[l] + (1.0 - kBeta2) * grads.b[l].array().square().matrix();
    net.biases()[l].array() -=
        lr * (state.mb[l].array() / bc1) / ((state.vb[l].array() / bc2).sqrt() + kAdamEps);
  }
}

void AdamState::save(std::ostream& os) const {
  detail::write_u64(os, static_cast<std::uint64_t>(t));
  detail::write_u64(os, mW.size());
  for (std::size_t l = 0; l < mW.size(); ++l) {
    detail::write_u64(os, static_cast<std::uint64_t>(mW[l].rows()));
    detail::write_u64(os, static_cast<std::uint64_t>(mW[l].cols()));
    detail::write_doubles(os, mW[l].data(), static_cast<std::size_t>(mW[l].size()));
    detail::write_doubles(os, vW[l].data(), static_cast<std::size_t>(vW[l].size()));
    detail::write_doubles(os, mb[l].data(), static_cast<std::size_t>(mb[l].size()));
    detail::write_doubles(os, vb[l].data(), static_cast<std::size_t>(vb[l].size()));
  }
}

AdamState AdamState::load(std::istream& is) {
  AdamState st;
  st.t = static_cast<long>(detail::read_u64(is));
  const std::uint64_t n = detail::read_u64(is);
  for (std::uint64_t l = 0; l < n; ++l) {
    const auto rows = static_cast<Eigen::Index>(detail::read_u64(is));
    const auto cols = static_cast<Eigen::Index>(detail::read_u64(is));
    Mat mw(rows, cols), vw(rows, cols);
    Vec mb(rows), vb(rows);
    detail::read_doubles(is, mw.data(), static_cast<std::size_t>(mw.size()));
    detail::read_doubles(is, vw.data(), static_cast<std::size_t>(vw.size()));
    detail::read_doubles(is, mb.data(), static_cast<std::size_t>(mb.size()));
    detail::read_doubles(is, vb.data(), static_cast<std::size_t>(vb.size()));
    st.mW.push_back(std::move(mw));
    st.vW.push_back(std::move(vw));
    st.mb.push_back(std::move(mb));
    st.vb.push_back(std::move(vb));
  }
  return st;
}

bool AdamState::operator==(const AdamState& other) const {
  if (t != other.t || mW.size() != other.mW.size()) return false;
  for (std::size_t l = 0; l < mW.size(); ++l) {
    if (mW[l] != other.mW[l] || vW[l] != other.vW[l] || mb[l] != other.mb[l] ||
        vb[l] != other.vb[l])
      return false;
  }
  return true;
}

AdamVec AdamVec::like(const Vec& p) {
  AdamVec st;
  st.m = Vec::Zero(p.size());
  st.v = Vec::Zero(p.size());
  return st;
}

bool AdamVec::operator==(const AdamVec& other) const {
  return t == other.t && m == other.m && v == other.v;
}

void adam_step(Vec& param, const Vec& grad, AdamVec& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  state.m = kBeta1 * state.m + (1.0 - kBeta1) * grad;
  state.v = kBeta2 * state.v + (1.0 - kBeta2) * grad.array().square().matrix();
  param.array() -= lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + kAdamEps);
}

void adam_step(double& param, double grad, AdamScalar& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  state.m = kBeta1 * state.m + (1.0 - kBeta1) * grad;
  state.v = kBeta2 * state.v + (1.0 - kBeta2) * grad * grad;
  param -= lr * (state.m / bc1) / (std::sqrt(state.v / bc2) + kAdamEps);
}

double lr_schedule(double lr0, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return lr0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * std::max(frac, 0.01);
}

}  // namespace tracklearn
