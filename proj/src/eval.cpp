#include "nfer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nfer/core.hpp"
#include "nfer/losses.hpp"

namespace nfer::eval {

namespace {
std::size_t argmax_row(std::span<const double> r) {
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}
}  // namespace

double overall_accuracy(const Matrix& predictions, std::span<const int> labels) {
  if (predictions.rows() != labels.size()) throw ShapeError("overall_accuracy: length mismatch");
  if (labels.empty()) throw DataError("overall_accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (static_cast<int>(argmax_row(predictions.row(i))) == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

Matrix confusion_matrix(const Matrix& predictions, std::span<const int> labels, int num_classes) {
  if (predictions.rows() != labels.size()) throw ShapeError("confusion_matrix: length mismatch");
  const auto c = static_cast<std::size_t>(num_classes);
  Matrix m(c, c);
  for (std::size_t i = 0; i < labels.size(); ++i)
    m(static_cast<std::size_t>(labels[i]), argmax_row(predictions.row(i))) += 1.0;
  return m;
}

std::vector<double> per_sample_ce(const Matrix& predictions, std::span<const int> labels) {
  if (predictions.rows() != labels.size()) throw ShapeError("per_sample_ce: length mismatch");
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = -std::log(std::max(predictions(i, static_cast<std::size_t>(labels[i])), losses::kLogFloor));
  return out;
}

double CeHistogram::separation() const {
  if (clean.count == 0 || noisy.count == 0) return 0.0;
  return noisy.mean / clean.mean;
}

CeHistogram ce_histogram_by_noise(std::span<const std::int64_t> ids, std::span<const double> ce,
                                  const noise::NoiseLedger& ledger, std::size_t bins) {
  if (ids.size() != ce.size()) throw ShapeError("ce_histogram: ids and values differ in length");
  if (bins == 0) throw RangeError("bins", "must be positive");
  std::map<std::int64_t, bool> flipped;
  for (const auto& e : ledger.entries) flipped[e.id] = e.flipped();
  CeHistogram h;
  double hi = 0.0;
  for (double v : ce) hi = std::max(hi, v);
  if (!(hi > 0.0)) hi = 1.0;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  h.clean.histogram.assign(bins, 0);
  h.noisy.histogram.assign(bins, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = flipped.find(ids[i]);
    if (it == flipped.end()) throw DataError("ce_histogram: sample " + std::to_string(ids[i]) + " missing from ledger");
    GroupStats& g = it->second ? h.noisy : h.clean;
    ++g.count;
    g.mean += ce[i];
    const auto b = std::min(bins - 1, static_cast<std::size_t>(ce[i] / hi * static_cast<double>(bins)));
    ++g.histogram[b];
  }
  if (h.clean.count) h.clean.mean /= static_cast<double>(h.clean.count);
  if (h.noisy.count) h.noisy.mean /= static_cast<double>(h.noisy.count);
  return h;
}

double js_divergence(std::span<const double> p1, std::span<const double> p2) {
  if (p1.size() != p2.size()) throw ShapeError("js_divergence: length mismatch");
  double js = 0.0;
  for (std::size_t j = 0; j < p1.size(); ++j) {
    const double m = 0.5 * (p1[j] + p2[j]);
    if (p1[j] > 0.0) js += 0.5 * p1[j] * std::log(p1[j] / m);
    if (p2[j] > 0.0) js += 0.5 * p2[j] * std::log(p2[j] / m);
  }
  return std::max(js, 0.0);
}

double mean_js(const DistributionSet& reference, const DistributionSet& candidate) {
  if (reference.size() != candidate.size()) throw DataError("mean_js: sets cover different ids");
  if (reference.empty()) throw DataError("mean_js: empty sets");
  double acc = 0.0;
  for (const auto& [id, ref] : reference) {
    const auto it = candidate.find(id);
    if (it == candidate.end()) throw DataError("mean_js: id " + std::to_string(id) + " missing from candidate set");
    acc += js_divergence(ref, it->second);
  }
  return acc / static_cast<double>(reference.size());
}

Matrix predict(const model::ModelState& model, const data::Dataset& dataset) {
  return model.forward_expression(dataset.inputs()).p;
}

void export_embeddings(const model::ModelState& model, const data::Dataset& dataset,
                       const noise::NoiseLedger* ledger, const std::filesystem::path& path) {
  const Matrix u = model.forward_expression(dataset.inputs()).u;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings to " + path.string());
  out << "id,label,flipped";
  for (std::size_t j = 0; j < u.cols(); ++j) out << ",u_" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records[i];
    const bool flipped = ledger ? ledger->at(r.id).flipped() : false;
    out << r.id << ',' << r.label << ',' << (flipped ? 1 : 0) << ',' << join_doubles(u.row(i), ',') << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os << "overall_accuracy: " << overall_accuracy << '\n';
  os << "confusion (rows = true class, columns = predicted):\n";
  for (std::size_t i = 0; i < confusion.rows(); ++i) {
    os << "  ";
    for (std::size_t j = 0; j < confusion.cols(); ++j) os << (j ? " " : "") << static_cast<long long>(confusion(i, j));
    os << '\n';
  }
  if (clean_vs_noisy_ce) {
    os << "train CE vs given labels: clean mean " << clean_vs_noisy_ce->clean.mean << " (n=" << clean_vs_noisy_ce->clean.count
       << "), flipped mean " << clean_vs_noisy_ce->noisy.mean << " (n=" << clean_vs_noisy_ce->noisy.count
       << "), ratio " << clean_vs_noisy_ce->separation() << '\n';
  } else {
    os << "train CE histogram: skipped (no noise ledger)\n";
  }
  if (js_scores && !js_scores->empty()) {
    const double m = std::accumulate(js_scores->begin(), js_scores->end(), 0.0) / static_cast<double>(js_scores->size());
    os << "mean JS(targets, clean labels) on flipped samples: " << m << " (n=" << js_scores->size() << ")\n";
  }
  return os.str();
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.txt");
    out << summary();
  }
  {
    std::ofstream out(dir / "confusion.csv");
    for (std::size_t i = 0; i < confusion.rows(); ++i) {
      for (std::size_t j = 0; j < confusion.cols(); ++j) out << (j ? "," : "") << static_cast<long long>(confusion(i, j));
      out << '\n';
    }
  }
  if (clean_vs_noisy_ce) {
    std::ofstream out(dir / "ce_histogram.csv");
    out << "bin_lo,bin_hi,clean,noisy\n";
    const auto& h = *clean_vs_noisy_ce;
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
      out << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ',' << h.clean.histogram[b] << ','
          << h.noisy.histogram[b] << '\n';
  }
  if (js_scores) {
    std::ofstream out(dir / "js_scores.csv");
    out << "js\n";
    for (double v : *js_scores) out << format_double(v) << '\n';
  }
}

}  // namespace nfer::eval
