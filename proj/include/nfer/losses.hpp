#pragma once

#include <span>
#include <string>

#include "nfer/matrix.hpp"

namespace nfer::losses {

inline constexpr double kLogFloor = 1e-12;

struct LossValue {
  double value = 0.0;
  /// Number of probabilities that hit the log floor.
  std::size_t clamped = 0;
};

/// Mean over the batch of -log p[i, label_i]. `grad_logits`, when given,
/// receives dL/dlogits = (p - onehot) / n.
LossValue ce_loss(const Matrix& p, std::span<const int> labels, Matrix* grad_logits = nullptr);

/// Mean over the batch of KL(d_i || p_i) with 0 log 0 = 0.
/// `grad_logits` receives (p - d) / n. `grad_targets` receives
/// (log d + 1 - log p) / n where d > 0.
LossValue kl_loss(const Matrix& targets, const Matrix& p, Matrix* grad_logits = nullptr,
                  Matrix* grad_targets = nullptr);

/// Mean squared error over samples and coordinates.
double landmark_mse(const Matrix& pred, const Matrix& truth, Matrix* grad_pred = nullptr);

struct LossReport {
  double ce = 0.0;
  double kl = 0.0;
  double lm = 0.0;
  double el = 0.0;
  double total = 0.0;
};

/// total = ce + lm + alpha kl + beta el. Throws NumericError naming the first
/// non-finite component.
LossReport total_loss(double ce, double lm, double kl, double el, double alpha, double beta);

}  // namespace nfer::losses
