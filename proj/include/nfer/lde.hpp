#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nfer/matrix.hpp"
#include "nfer/nn.hpp"

// Label distribution estimation: batch-local neighbor search in the
// expression and landmark feature spaces, learned pairwise contribution
// scores, score-weighted aggregation of neighbor predictions, and an
// exponential moving average of the aggregated targets across epochs.

namespace nfer::lde {

using NeighborLists = std::vector<std::vector<std::size_t>>;
using ScoreLists = std::vector<std::vector<double>>;

/// Pairwise cosine similarities of the rows of `features`. Throws
/// NumericError on a zero row.
Matrix cosine_similarity_matrix(const Matrix& features);

/// Indices of the K largest entries of `similarities`, skipping `self` when
/// given. Ties go to the lower index. Throws RangeError unless K < n.
std::vector<std::size_t> knn_neighbors(std::span<const double> similarities, std::size_t k,
                                       std::optional<std::size_t> self);

/// knn_neighbors for every row, self excluded.
NeighborLists knn_all(const Matrix& similarities, std::size_t k);

/// c(i,j) = sigmoid(f([g1(x_i), g2(x_j)])). Features enter as constants: the
/// backward pass only touches the scorer's own parameters.
class ContributionScorer {
 public:
  struct Cache {
    nn::Mlp::Cache g1, g2, f;
    Matrix a, b;  // g1 / g2 outputs for every row
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<double> scores;
  };

  static constexpr std::size_t kEmbedDim = 64;

  ContributionScorer() = default;
  ContributionScorer(std::size_t feature_dim, std::mt19937_64& rng);

  std::vector<double> scores(const Matrix& features, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                             Cache* cache = nullptr) const;
  ScoreLists scores(const Matrix& features, const NeighborLists& neighbors, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients given dL/dscore per pair (cache order).
  void backward(const Cache& cache, std::span<const double> dscores);
  void backward(const Cache& cache, const ScoreLists& dscores);

  std::vector<nn::Parameter*> parameters();

  nn::Mlp g1;
  nn::Mlp g2;
  nn::Mlp f;
};

/// d_i = 1/2 (sum_k c^u_ik p_k / sum_k c^u_ik + sum_k c^v_ik p_k / sum_k c^v_ik).
Matrix aggregate_targets(const Matrix& predictions, const NeighborLists& neighbors_u, const NeighborLists& neighbors_v,
                         const ScoreLists& scores_u, const ScoreLists& scores_v);

struct AggregateGradient {
  ScoreLists scores_u;
  ScoreLists scores_v;
};

/// Gradient of aggregate_targets with respect to the scores only; the
/// predictions are treated as constants.
AggregateGradient aggregate_targets_backward(const Matrix& predictions, const NeighborLists& neighbors_u,
                                             const NeighborLists& neighbors_v, const ScoreLists& scores_u,
                                             const ScoreLists& scores_v, const Matrix& d_targets);

/// Per-sample EMA target buffer keyed by sample id.
class TargetStore {
 public:
  TargetStore() = default;
  /// Smoothed one-hot initialization: (1 - eps) e_y + eps / C.
  TargetStore(std::span<const std::int64_t> ids, std::span<const int> labels, int num_classes, double smoothing);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t num_classes() const noexcept { return targets_.cols(); }
  int epoch() const noexcept { return epoch_; }
  bool contains(std::int64_t id) const { return index_.count(id) != 0; }

  std::span<const double> get(std::int64_t id) const;
  Matrix gather(std::span<const std::int64_t> ids) const;

  /// d[e] = omega d[e-1] + (1 - omega) fresh for every id in `fresh`, then
  /// renormalized, then the epoch counter advances once.
  void ema_update(const std::map<std::int64_t, std::vector<double>>& fresh, double omega);

  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
  const Matrix& targets() const noexcept { return targets_; }
  /// Restores raw state (checkpoints).
  void assign(std::vector<std::int64_t> ids, Matrix targets, int epoch);

  /// CSV `id,d_1..d_C`.
  void export_csv(const std::filesystem::path& path) const;

 private:
  std::vector<std::int64_t> ids_;
  Matrix targets_;
  std::unordered_map<std::int64_t, std::size_t> index_;
  int epoch_ = 0;
};

}  // namespace nfer::lde
