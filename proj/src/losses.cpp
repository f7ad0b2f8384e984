#include "nfer/losses.hpp"

#include <cmath>

#include "nfer/core.hpp"

namespace nfer::losses {

namespace {
double floored_log(double x, std::size_t& clamped) {
  if (x < kLogFloor) {
    ++clamped;
    return std::log(kLogFloor);
  }
  return std::log(x);
}
}  // namespace

LossValue ce_loss(const Matrix& p, std::span<const int> labels, Matrix* grad_logits) {
  if (p.rows() != labels.size()) throw ShapeError("ce_loss: label count differs from batch");
  if (p.rows() == 0) throw ShapeError("ce_loss: empty batch");
  LossValue out;
  const double n = static_cast<double>(p.rows());
  if (grad_logits) *grad_logits = p;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p.cols()) throw DataError("ce_loss: label out of range");
    const auto y = static_cast<std::size_t>(labels[i]);
    out.value -= floored_log(p(i, y), out.clamped);
    if (grad_logits) (*grad_logits)(i, y) -= 1.0;
  }
  out.value /= n;
  if (grad_logits) *grad_logits *= 1.0 / n;
  return out;
}

LossValue kl_loss(const Matrix& targets, const Matrix& p, Matrix* grad_logits, Matrix* grad_targets) {
  if (targets.rows() != p.rows() || targets.cols() != p.cols()) throw ShapeError("kl_loss: shape mismatch");
  if (p.rows() == 0) throw ShapeError("kl_loss: empty batch");
  LossValue out;
  const double n = static_cast<double>(p.rows());
  if (grad_logits) *grad_logits = Matrix(p.rows(), p.cols());
  if (grad_targets) *grad_targets = Matrix(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double mass = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) mass += targets(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double d = targets(i, j);
      if (grad_logits) (*grad_logits)(i, j) = (p(i, j) * mass - d) / n;
      if (d <= 0.0) continue;
      const double log_ratio = std::log(d) - floored_log(p(i, j), out.clamped);
      out.value += d * log_ratio;
      if (grad_targets) (*grad_targets)(i, j) = (log_ratio + 1.0) / n;
    }
  }
  out.value /= n;
  return out;
}

double landmark_mse(const Matrix& pred, const Matrix& truth, Matrix* grad_pred) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("landmark_mse: shape mismatch");
  if (pred.size() == 0) throw ShapeError("landmark_mse: empty input");
  const double count = static_cast<double>(pred.size());
  if (grad_pred) *grad_pred = Matrix(pred.rows(), pred.cols());
  double acc = 0.0;
  auto pv = pred.values();
  auto tv = truth.values();
  for (std::size_t k = 0; k < pv.size(); ++k) {
    const double e = pv[k] - tv[k];
    acc += e * e;
    if (grad_pred) grad_pred->values()[k] = 2.0 * e / count;
  }
  return acc / count;
}

LossReport total_loss(double ce, double lm, double kl, double el, double alpha, double beta) {
  const std::pair<const char*, double> parts[] = {{"ce", ce}, {"lm", lm}, {"kl", kl}, {"el", el}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component: ") + name);
  LossReport r{ce, kl, lm, el, 0.0};
  r.total = ce + lm + alpha * kl + beta * el;
  return r;
}

}  // namespace nfer::losses
