#include "nfer/elcl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nfer/core.hpp"
#include "nfer/kernels.hpp"

namespace nfer::elcl {

namespace {
constexpr double kUnitTolerance = 1e-6;

void require_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double x : m.row(i)) s += x * x;
    if (std::abs(std::sqrt(s) - 1.0) > kUnitTolerance)
      throw NumericError(std::string(what) + ": row " + std::to_string(i) + " is not unit-norm");
  }
}
}  // namespace

std::vector<int> pseudo_labels(const Matrix& targets, double delta) {
  std::vector<int> out(targets.rows(), kAmbiguous);
  for (std::size_t i = 0; i < targets.rows(); ++i) {
    auto row = targets.row(i);
    const auto it = std::max_element(row.begin(), row.end());
    if (*it > delta) out[i] = static_cast<int>(it - row.begin());
  }
  return out;
}

void MemoryBank::enqueue(const Matrix& keys, std::span<const int> labels) {
  if (keys.rows() != labels.size()) throw ShapeError("memory bank: keys and labels differ in count");
  if (keys.rows() && keys.cols() != dim_) throw ShapeError("memory bank: key width mismatch");
  require_unit_rows(keys, "memory bank");
  for (std::size_t i = 0; i < keys.rows(); ++i) {
    keys_.emplace_back(keys.row(i).begin(), keys.row(i).end());
    labels_.push_back(labels[i]);
  }
  while (labels_.size() > capacity_) {
    keys_.pop_front();
    labels_.pop_front();
  }
}

Matrix MemoryBank::keys() const {
  Matrix m(keys_.size(), dim_);
  for (std::size_t i = 0; i < keys_.size(); ++i) std::copy(keys_[i].begin(), keys_[i].end(), m.row(i).begin());
  return m;
}

void MemoryBank::clear() {
  keys_.clear();
  labels_.clear();
}

PairIndex build_pairs(std::span<const int> batch_labels, std::span<const int> bank_labels) {
  const std::size_t n = batch_labels.size();
  const std::size_t total = n + bank_labels.size();
  auto label_of = [&](std::size_t j) { return j < n ? batch_labels[j] : bank_labels[j - n]; };
  PairIndex pi;
  pi.num_keys = total;
  pi.positives.resize(n);
  pi.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int li = batch_labels[i];
    for (std::size_t j = 0; j < total; ++j) {
      const bool positive = li == kAmbiguous ? j == i : label_of(j) == li;
      (positive ? pi.positives[i] : pi.negatives[i]).push_back(j);
    }
  }
  return pi;
}

double contrastive_direction(const Matrix& queries, const Matrix& keys, const PairIndex& pairs, double tau,
                             Matrix* grad_q) {
  if (!(tau > 0.0)) throw RangeError("tau", "temperature must be positive");
  const std::size_t n = queries.rows();
  if (pairs.positives.size() != n || pairs.num_keys != keys.rows())
    throw ShapeError("contrastive loss: pair index does not match query/key counts");
  if (queries.cols() != keys.cols()) throw ShapeError("contrastive loss: query/key width mismatch");
  if (n == 0) return 0.0;
  const Matrix logits = kernels::matmul_nt(queries, keys);  // n x (n + M), unscaled
  if (grad_q) *grad_q = Matrix(n, queries.cols());
  double loss = 0.0;
  std::vector<double> ds(keys.rows());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pos = pairs.positives[i];
    const auto& neg = pairs.negatives[i];
    if (pos.empty()) throw NumericError("contrastive loss: anchor without positives");
    auto s = logits.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : s) mx = std::max(mx, x / tau);
    double neg_mass = 0.0;
    for (std::size_t m : neg) neg_mass += std::exp(s[m] / tau - mx);
    const double inv_pos = 1.0 / static_cast<double>(pos.size());
    double anchor = 0.0;
    std::fill(ds.begin(), ds.end(), 0.0);
    double neg_coef = 0.0;
    for (std::size_t j : pos) {
      const double ej = std::exp(s[j] / tau - mx);
      const double z = ej + neg_mass;
      anchor -= (s[j] / tau - mx) - std::log(z);
      ds[j] += (-1.0 + ej / z) * inv_pos;
      neg_coef += inv_pos / z;
    }
    loss += anchor * inv_pos;
    if (grad_q) {
      for (std::size_t m : neg) ds[m] += neg_coef * std::exp(s[m] / tau - mx);
      auto g = grad_q->row(i);
      const double scale = 1.0 / (tau * static_cast<double>(n));
      for (std::size_t m = 0; m < keys.rows(); ++m) {
        if (ds[m] == 0.0) continue;
        auto km = keys.row(m);
        for (std::size_t t = 0; t < g.size(); ++t) g[t] += ds[m] * scale * km[t];
      }
    }
  }
  return loss / static_cast<double>(n);
}

ElLossResult el_loss(const Matrix& q_u, const Matrix& q_v, const Matrix& keys_u, const Matrix& keys_v,
                     const PairIndex& pairs, double tau, bool with_gradient) {
  if (!(tau > 0.0)) throw RangeError("tau", "temperature must be positive");
  require_unit_rows(q_u, "el loss query_u");
  require_unit_rows(q_v, "el loss query_v");
  require_unit_rows(keys_u, "el loss keys_u");
  require_unit_rows(keys_v, "el loss keys_v");
  ElLossResult r;
  r.l1 = contrastive_direction(q_u, keys_v, pairs, tau, with_gradient ? &r.grad_q_u : nullptr);
  r.l2 = contrastive_direction(q_v, keys_u, pairs, tau, with_gradient ? &r.grad_q_v : nullptr);
  r.total = r.l1 + r.l2;
  return r;
}

}  // namespace nfer::elcl
