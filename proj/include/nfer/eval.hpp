#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfer/data.hpp"
#include "nfer/matrix.hpp"
#include "nfer/model.hpp"
#include "nfer/noise.hpp"

namespace nfer::eval {

/// Fraction of rows whose argmax equals the label.
double overall_accuracy(const Matrix& predictions, std::span<const int> labels);
/// C x C counts, row = true label, column = predicted class.
Matrix confusion_matrix(const Matrix& predictions, std::span<const int> labels, int num_classes);
/// -log p[i, label_i] per row (floored like ce_loss).
std::vector<double> per_sample_ce(const Matrix& predictions, std::span<const int> labels);

struct GroupStats {
  std::size_t count = 0;
  double mean = 0.0;
  std::vector<std::size_t> histogram;
};

struct CeHistogram {
  GroupStats clean;
  GroupStats noisy;
  std::vector<double> edges;  // bins + 1 edges over [0, max CE]
  /// noisy.mean / clean.mean.
  double separation() const;
};

inline constexpr std::size_t kHistogramBins = 50;

CeHistogram ce_histogram_by_noise(std::span<const std::int64_t> ids, std::span<const double> ce,
                                  const noise::NoiseLedger& ledger, std::size_t bins = kHistogramBins);

/// Jensen-Shannon divergence, natural log.
double js_divergence(std::span<const double> p1, std::span<const double> p2);

using DistributionSet = std::map<std::int64_t, std::vector<double>>;
/// Mean JS over ids; both sets must cover the same ids.
double mean_js(const DistributionSet& reference, const DistributionSet& candidate);

/// Expression-branch class probabilities for every record.
Matrix predict(const model::ModelState& model, const data::Dataset& dataset);

/// CSV `id,label,flipped,u_1..u_D`. `flipped` is 0 without a ledger.
void export_embeddings(const model::ModelState& model, const data::Dataset& dataset,
                       const noise::NoiseLedger* ledger, const std::filesystem::path& path);

struct EvalReport {
  double overall_accuracy = 0.0;
  Matrix confusion;
  std::optional<CeHistogram> clean_vs_noisy_ce;
  std::optional<std::vector<double>> js_scores;

  /// summary.txt, confusion.csv, and ce_histogram.csv when present.
  void write(const std::filesystem::path& dir) const;
  std::string summary() const;
};

}  // namespace nfer::eval
