#pragma once

#include <random>
#include <vector>

#include "nfer/matrix.hpp"

namespace nfer::nn {

struct Parameter {
  Matrix value;
  Matrix grad;

  explicit Parameter(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}
  Parameter() = default;
  void zero_grad() { grad.fill(0.0); }
};

/// y = x W^T + b, W is out x in.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_features() const noexcept { return weight_.value.cols(); }
  std::size_t out_features() const noexcept { return weight_.value.rows(); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients for the input `x` that produced the
  /// output and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  Parameter& weight() noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }
  const Parameter& weight() const noexcept { return weight_; }
  const Parameter& bias() const noexcept { return bias_; }
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const { return {&weight_, &bias_}; }

 private:
  Parameter weight_;
  Parameter bias_;
};

/// Stack of Linear layers with ReLU between them. The last layer's output is
/// returned without activation.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (post-activation)
  };

  Mlp() = default;
  /// dims = {in, hidden..., out}.
  Mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng);

  std::size_t in_features() const;
  std::size_t out_features() const;
  std::size_t depth() const noexcept { return layers_.size(); }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& dy);

  Linear& layer(std::size_t i) { return layers_[i]; }
  const Linear& layer(std::size_t i) const { return layers_[i]; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  std::vector<Linear> layers_;
};

void zero_grads(const std::vector<Parameter*>& params);

/// Adam with bias correction. Moment buffers are aligned with the parameter
/// list passed at construction.
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Parameter*>& params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(const std::vector<Parameter*>& params, double lr);
  long long steps() const noexcept { return t_; }

  // Exposed for checkpointing.
  std::vector<Matrix>& first_moments() noexcept { return m_; }
  std::vector<Matrix>& second_moments() noexcept { return v_; }
  const std::vector<Matrix>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix>& second_moments() const noexcept { return v_; }
  void set_steps(long long t) noexcept { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Rows divided by their Euclidean norm; `norms` receives the pre-normalization norms.
Matrix l2_normalize_rows(const Matrix& x, std::vector<double>* norms = nullptr);
/// Gradient through row normalization: given y = x/|x| and dL/dy, returns dL/dx.
Matrix l2_normalize_backward(const Matrix& y, const std::vector<double>& norms, const Matrix& dy);

}  // namespace nfer::nn
