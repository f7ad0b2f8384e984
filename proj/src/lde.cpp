#include "nfer/lde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nfer/core.hpp"
#include "nfer/kernels.hpp"

namespace nfer::lde {

Matrix cosine_similarity_matrix(const Matrix& features) { return kernels::cosine_similarity(features); }

std::vector<std::size_t> knn_neighbors(std::span<const double> similarities, std::size_t k,
                                       std::optional<std::size_t> self) {
  const std::size_t n = similarities.size();
  const std::size_t available = self && *self < n ? n - 1 : n;
  if (k >= n || k > available) {
    throw RangeError("k_neighbors", "K=" + std::to_string(k) + " needs more than " + std::to_string(n) + " candidates");
  }
  std::vector<std::size_t> idx;
  idx.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    if (!self || j != *self) idx.push_back(j);
  auto better = [&](std::size_t a, std::size_t b) {
    if (similarities[a] != similarities[b]) return similarities[a] > similarities[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

NeighborLists knn_all(const Matrix& similarities, std::size_t k) {
  NeighborLists out(similarities.rows());
  for (std::size_t i = 0; i < similarities.rows(); ++i) out[i] = knn_neighbors(similarities.row(i), k, i);
  return out;
}

ContributionScorer::ContributionScorer(std::size_t feature_dim, std::mt19937_64& rng)
    : g1({feature_dim, kEmbedDim}, rng), g2({feature_dim, kEmbedDim}, rng), f({2 * kEmbedDim, kEmbedDim, 1}, rng) {}

std::vector<double> ContributionScorer::scores(const Matrix& features,
                                               std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                               Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.a = g1.forward(features, &c.g1);
  c.b = g2.forward(features, &c.g2);
  c.pairs.assign(pairs.begin(), pairs.end());
  const std::size_t e = c.a.cols();
  Matrix joined(pairs.size(), 2 * e);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto [i, j] = pairs[r];
    if (i >= features.rows() || j >= features.rows()) throw ShapeError("contribution scores: pair index out of range");
    auto dst = joined.row(r);
    std::copy(c.a.row(i).begin(), c.a.row(i).end(), dst.begin());
    std::copy(c.b.row(j).begin(), c.b.row(j).end(), dst.begin() + static_cast<std::ptrdiff_t>(e));
  }
  const Matrix z = f.forward(joined, &c.f);
  c.scores.resize(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) c.scores[r] = 1.0 / (1.0 + std::exp(-z(r, 0)));
  return c.scores;
}

namespace {
std::vector<std::pair<std::size_t, std::size_t>> flatten(const NeighborLists& neighbors) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    for (std::size_t k : neighbors[i]) pairs.emplace_back(i, k);
  return pairs;
}
}  // namespace

ScoreLists ContributionScorer::scores(const Matrix& features, const NeighborLists& neighbors, Cache* cache) const {
  const auto flat = scores(features, flatten(neighbors), cache);
  ScoreLists out(neighbors.size());
  std::size_t r = 0;
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    for (std::size_t k = 0; k < neighbors[i].size(); ++k) out[i].push_back(flat[r++]);
  return out;
}

void ContributionScorer::backward(const Cache& cache, std::span<const double> dscores) {
  if (dscores.size() != cache.pairs.size()) throw ShapeError("scorer backward: gradient length mismatch");
  Matrix dz(dscores.size(), 1);
  for (std::size_t r = 0; r < dscores.size(); ++r) {
    const double s = cache.scores[r];
    dz(r, 0) = dscores[r] * s * (1.0 - s);
  }
  const Matrix djoined = f.backward(cache.f, dz);
  const std::size_t e = cache.a.cols();
  Matrix da(cache.a.rows(), e), db(cache.b.rows(), e);
  for (std::size_t r = 0; r < cache.pairs.size(); ++r) {
    const auto [i, j] = cache.pairs[r];
    for (std::size_t t = 0; t < e; ++t) {
      da(i, t) += djoined(r, t);
      db(j, t) += djoined(r, e + t);
    }
  }
  g1.backward(cache.g1, da);
  g2.backward(cache.g2, db);
}

void ContributionScorer::backward(const Cache& cache, const ScoreLists& dscores) {
  std::vector<double> flat;
  for (const auto& row : dscores) flat.insert(flat.end(), row.begin(), row.end());
  backward(cache, flat);
}

std::vector<nn::Parameter*> ContributionScorer::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto* m : {&g1, &g2, &f})
    for (auto* p : m->parameters()) out.push_back(p);
  return out;
}

namespace {

void check_lists(const Matrix& p, const NeighborLists& nb, const ScoreLists& sc) {
  if (nb.size() != p.rows() || sc.size() != p.rows()) throw ShapeError("aggregate_targets: list count differs from batch");
  for (std::size_t i = 0; i < nb.size(); ++i) {
    if (nb[i].empty()) throw DataError("aggregate_targets: empty neighbor set for row " + std::to_string(i));
    if (nb[i].size() != sc[i].size()) throw ShapeError("aggregate_targets: scores misaligned with neighbors");
    for (std::size_t k : nb[i])
      if (k >= p.rows()) throw ShapeError("aggregate_targets: neighbor index out of range");
    for (double c : sc[i])
      if (!(c > 0.0)) throw NumericError("aggregate_targets: scores must be positive");
  }
}

// Score-weighted mean of neighbor predictions for one anchor, added with weight `w` into `out`.
void add_weighted_mean(const Matrix& p, const std::vector<std::size_t>& nb, const std::vector<double>& sc, double w,
                       std::span<double> out) {
  const double total = std::accumulate(sc.begin(), sc.end(), 0.0);
  for (std::size_t t = 0; t < nb.size(); ++t) {
    const double coef = w * sc[t] / total;
    auto pk = p.row(nb[t]);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += coef * pk[j];
  }
}

}  // namespace

Matrix aggregate_targets(const Matrix& predictions, const NeighborLists& neighbors_u, const NeighborLists& neighbors_v,
                         const ScoreLists& scores_u, const ScoreLists& scores_v) {
  check_lists(predictions, neighbors_u, scores_u);
  check_lists(predictions, neighbors_v, scores_v);
  Matrix d(predictions.rows(), predictions.cols());
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    add_weighted_mean(predictions, neighbors_u[i], scores_u[i], 0.5, d.row(i));
    add_weighted_mean(predictions, neighbors_v[i], scores_v[i], 0.5, d.row(i));
  }
  return d;
}

namespace {
std::vector<double> mean_grad(const Matrix& p, const std::vector<std::size_t>& nb, const std::vector<double>& sc,
                              std::span<const double> g) {
  // A = sum c_k p_k / S;  dA/dc_k = (p_k - A) / S;  dL/dc_k = 1/2 <g, p_k - A> / S.
  const double total = std::accumulate(sc.begin(), sc.end(), 0.0);
  std::vector<double> mean(p.cols(), 0.0);
  for (std::size_t t = 0; t < nb.size(); ++t)
    for (std::size_t j = 0; j < p.cols(); ++j) mean[j] += sc[t] / total * p(nb[t], j);
  std::vector<double> out(nb.size());
  for (std::size_t t = 0; t < nb.size(); ++t) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) dot += g[j] * (p(nb[t], j) - mean[j]);
    out[t] = 0.5 * dot / total;
  }
  return out;
}
}  // namespace

AggregateGradient aggregate_targets_backward(const Matrix& predictions, const NeighborLists& neighbors_u,
                                             const NeighborLists& neighbors_v, const ScoreLists& scores_u,
                                             const ScoreLists& scores_v, const Matrix& d_targets) {
  check_lists(predictions, neighbors_u, scores_u);
  check_lists(predictions, neighbors_v, scores_v);
  AggregateGradient g;
  g.scores_u.resize(predictions.rows());
  g.scores_v.resize(predictions.rows());
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    g.scores_u[i] = mean_grad(predictions, neighbors_u[i], scores_u[i], d_targets.row(i));
    g.scores_v[i] = mean_grad(predictions, neighbors_v[i], scores_v[i], d_targets.row(i));
  }
  return g;
}

TargetStore::TargetStore(std::span<const std::int64_t> ids, std::span<const int> labels, int num_classes,
                         double smoothing) {
  if (ids.size() != labels.size()) throw ShapeError("target store: ids and labels differ in length");
  if (num_classes < 2) throw DataError("target store: need at least 2 classes");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw RangeError("target_smoothing", "must lie in [0,1)");
  const auto c = static_cast<std::size_t>(num_classes);
  ids_.assign(ids.begin(), ids.end());
  targets_ = Matrix(ids.size(), c, smoothing / static_cast<double>(c));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw DataError("target store: label out of range");
    targets_(i, static_cast<std::size_t>(labels[i])) += 1.0 - smoothing;
    renormalize(targets_.row(i));
    if (!index_.emplace(ids[i], i).second) throw DuplicateIdError(ids[i]);
  }
}

std::span<const double> TargetStore::get(std::int64_t id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("target store: unknown sample id " + std::to_string(id));
  return targets_.row(it->second);
}

Matrix TargetStore::gather(std::span<const std::int64_t> ids) const {
  Matrix out(ids.size(), targets_.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto src = get(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void TargetStore::ema_update(const std::map<std::int64_t, std::vector<double>>& fresh, double omega) {
  if (!(omega >= 0.0 && omega < 1.0)) throw RangeError("omega", "must lie in [0,1)");
  for (const auto& [id, d] : fresh) {
    if (!index_.count(id)) throw DataError("target store: unknown sample id " + std::to_string(id));
    if (d.size() != targets_.cols()) throw ShapeError("target store: fresh target has wrong length");
  }
  for (const auto& [id, d] : fresh) {
    auto row = targets_.row(index_.at(id));
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = omega * row[j] + (1.0 - omega) * d[j];
    renormalize(row);
  }
  ++epoch_;
}

void TargetStore::assign(std::vector<std::int64_t> ids, Matrix targets, int epoch) {
  if (ids.size() != targets.rows()) throw ShapeError("target store: restore shape mismatch");
  index_.clear();
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!index_.emplace(ids[i], i).second) throw DuplicateIdError(ids[i]);
  ids_ = std::move(ids);
  targets_ = std::move(targets);
  epoch_ = epoch;
}

void TargetStore::export_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id";
  for (std::size_t j = 0; j < targets_.cols(); ++j) out << ",d_" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) out << ids_[i] << ',' << join_doubles(targets_.row(i), ',') << '\n';
}

}  // namespace nfer::lde
