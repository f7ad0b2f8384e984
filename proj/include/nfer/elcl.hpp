#pragma once

#include <deque>
#include <span>
#include <vector>

#include "nfer/matrix.hpp"

// Expression-landmark contrastive loss: pseudo-labels from the current
// targets choose which cross-view (expression query, landmark key) pairs are
// positives; momentum-encoded keys queued in memory banks add negatives.

namespace nfer::elcl {

inline constexpr int kAmbiguous = -1;

/// argmax(d_i) when max(d_i) > delta (strict), otherwise kAmbiguous.
std::vector<int> pseudo_labels(const Matrix& targets, double delta);

/// FIFO of unit-norm key vectors with the pseudo-label current at enqueue time.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  /// Appends rows oldest-first, evicting from the front beyond capacity.
  /// Throws NumericError when a key is not unit-norm (tolerance 1e-6).
  void enqueue(const Matrix& keys, std::span<const int> labels);
  /// Snapshot, oldest first.
  Matrix keys() const;
  std::vector<int> labels() const { return {labels_.begin(), labels_.end()}; }
  void clear();

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::deque<std::vector<double>> keys_;
  std::deque<int> labels_;
};

/// Positive and negative key indices per anchor. Key index j < n refers to
/// batch sample j; j >= n refers to bank entry j - n.
struct PairIndex {
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;
  std::size_t num_keys = 0;
};

PairIndex build_pairs(std::span<const int> batch_labels, std::span<const int> bank_labels);

/// One direction of the loss: queries from one view against keys of the
/// other view. Returns the value and, when `grad_q` is given, dL/dq.
double contrastive_direction(const Matrix& queries, const Matrix& keys, const PairIndex& pairs, double tau,
                             Matrix* grad_q = nullptr);

struct ElLossResult {
  double l1 = 0.0;  // expression queries vs landmark keys
  double l2 = 0.0;  // landmark queries vs expression keys
  double total = 0.0;
  Matrix grad_q_u;
  Matrix grad_q_v;
};

/// `keys_u` / `keys_v` hold batch keys followed by bank keys.
ElLossResult el_loss(const Matrix& q_u, const Matrix& q_v, const Matrix& keys_u, const Matrix& keys_v,
                     const PairIndex& pairs, double tau, bool with_gradient = false);

}  // namespace nfer::elcl
