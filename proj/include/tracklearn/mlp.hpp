#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <vector>

#include "tracklearn/rng.hpp"

namespace tracklearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Fully connected net, tanh hidden activations, linear output. 64-bit
/// weights. Layer sizes include input and output: {16, 64, ..., 1}.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);  // zero-initialized

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
  static Mlp random_init(std::vector<int> sizes, Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_affine() const { return static_cast<int>(weights_.size()); }

  std::vector<Mat>& weights() { return weights_; }
  std::vector<Vec>& biases() { return biases_; }
  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }

  struct Cache {
    Vec input;
    std::vector<Vec> act;  // post-tanh hidden activations, one per hidden layer
  };

  /// Batched variants hold one sample per column.
  struct BatchCache {
    Mat input;
    std::vector<Mat> act;
  };

  struct Grads {
    std::vector<Mat> W;
    std::vector<Vec> b;

    Grads& operator+=(const Grads& other);
    void scale(double f);
  };

  Grads zero_grads() const;

  Vec forward(const Vec& x, Cache* cache = nullptr) const;
  Mat forward_batch(const Mat& X, BatchCache* cache = nullptr) const;

  /// phi(x): activations of the last hidden layer from a forward cache.
  const Vec& last_hidden(const Cache& cache) const { return cache.act.back(); }
  const Mat& last_hidden(const BatchCache& cache) const { return cache.act.back(); }

  /// Exact reverse-mode gradients. grad_out = dL/dy. grad_last_hidden, when
  /// given, is an extra dL/dphi injected at the last hidden activation
  /// (the gSDE feature path). grads may be null when only the input gradient
  /// is wanted. Gradients accumulate into *grads.
  void backward(const Cache& cache, const Vec& grad_out, Grads* grads,
                Vec* grad_input = nullptr, const Vec* grad_last_hidden = nullptr) const;
  void backward_batch(const BatchCache& cache, const Mat& grad_out, Grads* grads,
                      Mat* grad_input = nullptr, const Mat* grad_last_hidden = nullptr) const;

  std::size_t param_count() const;

  /// Flat parameter access in a fixed order (per layer: W row-major, then b).
  /// Used by the finite-difference checks and the checkpoint format.
  std::vector<double> flatten_params() const;
  void unflatten_params(const std::vector<double>& flat);
  static std::vector<double> flatten_grads(const Grads& grads);

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

  bool operator==(const Mlp& other) const;

 private:
  std::vector<int> sizes_;
  std::vector<Mat> weights_;  // weights_[l]: sizes_[l+1] x sizes_[l]
  std::vector<Vec> biases_;
};

/// Adam with bias correction; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
struct AdamState {
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  long t = 0;

  static AdamState like(const Mlp& net);
  void save(std::ostream& os) const;
  static AdamState load(std::istream& is);
  bool operator==(const AdamState& other) const;
};

void adam_step(Mlp& net, const Mlp::Grads& grads, AdamState& state, double lr);

struct AdamVec {
  Vec m, v;
  long t = 0;

  static AdamVec like(const Vec& p);
  bool operator==(const AdamVec& other) const;
};

void adam_step(Vec& param, const Vec& grad, AdamVec& state, double lr);

struct AdamScalar {
  double m = 0.0, v = 0.0;
  long t = 0;
  bool operator==(const AdamScalar& other) const = default;
};

void adam_step(double& param, double grad, AdamScalar& state, double lr);

/// Linear learning-rate decay, floored at 1% of lr0.
double lr_schedule(double lr0, std::uint64_t step, std::uint64_t total_steps);

}  // namespace tracklearn
