#include "nfer/nn.hpp"

#include <cmath>

#include "nfer/core.hpp"
#include "nfer/kernels.hpp"

namespace nfer::nn {

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  // Kaiming-uniform weights, small uniform bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> w(-bound, bound);
  Matrix wm(out, in);
  for (double& x : wm.values()) x = w(rng);
  weight_ = Parameter(std::move(wm));
  const double bb = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> b(-bb, bb);
  Matrix bm(1, out);
  for (double& x : bm.values()) x = b(rng);
  bias_ = Parameter(std::move(bm));
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_features())
    throw ShapeError("linear layer expects " + std::to_string(in_features()) + " inputs, got " +
                     std::to_string(x.cols()));
  Matrix y = kernels::matmul_nt(x, weight_.value);
  kernels::add_row_bias(y, bias_.value);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight_.grad += kernels::matmul_tn(dy, x);
  bias_.grad += kernels::column_sums(dy);
  return kernels::matmul_nn(dy, weight_.value);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw ShapeError("mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1], rng);
}

std::size_t Mlp::in_features() const { return layers_.front().in_features(); }
std::size_t Mlp::out_features() const { return layers_.back().out_features(); }

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (cache) cache->inputs.clear();
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    h = layers_[l].forward(h);
    if (l + 1 < layers_.size())
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
  }
  return h;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& dy) {
  Matrix g = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) {
      // ReLU mask: the next layer's input is relu(pre-activation) and is
      // positive exactly where the pre-activation was.
      const Matrix& act = cache.inputs[l + 1];
      auto gv = g.values();
      auto av = act.values();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (!(av[i] > 0.0)) gv[i] = 0.0;
    }
    g = layers_[l].backward(cache.inputs[l], g);
  }
  return g;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_)
    for (const auto* p : l.parameters()) out.push_back(p);
  return out;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

Adam::Adam(const std::vector<Parameter*>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto* p : params) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  if (params.size() != m_.size()) throw ShapeError("adam: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.values();
    auto g = params[k]->grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

Matrix l2_normalize_rows(const Matrix& x, std::vector<double>* norms) {
  auto n = kernels::row_norms(x);
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    if (!(n[i] > 0.0)) throw NumericError("cannot normalize a zero row");
    for (double& v : y.row(i)) v /= n[i];
  }
  if (norms) *norms = std::move(n);
  return y;
}

Matrix l2_normalize_backward(const Matrix& y, const std::vector<double>& norms, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yi = y.row(i);
    auto gi = dy.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yi.size(); ++j) dot += yi[j] * gi[j];
    for (std::size_t j = 0; j < yi.size(); ++j) dx(i, j) = (gi[j] - yi[j] * dot) / norms[i];
  }
  return dx;
}

}  // namespace nfer::nn
