#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "nfer/core.hpp"
#include "nfer/eval.hpp"

using namespace nfer;
using namespace nfer::eval;

namespace {

double kl_direct(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (a[j] > 0) s += a[j] * std::log(a[j] / b[j]);
  return s;
}

double js_direct(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> m(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) m[j] = 0.5 * (a[j] + b[j]);
  return 0.5 * kl_direct(a, m) + 0.5 * kl_direct(b, m);
}

noise::NoiseLedger ledger_of(const std::vector<bool>& flipped) {
  noise::NoiseLedger l;
  for (std::size_t i = 0; i < flipped.size(); ++i)
    l.entries.push_back({static_cast<std::int64_t>(i), 0, flipped[i] ? 1 : 0});
  return l;
}

}  // namespace

TEST(Accuracy, Counting) {
  const Matrix p{{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}};
  EXPECT_DOUBLE_EQ(overall_accuracy(p, std::vector<int>{0, 1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(overall_accuracy(p, std::vector<int>{1, 0, 1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(overall_accuracy(p, std::vector<int>{0, 1, 1, 1}), 0.75);
  EXPECT_THROW(overall_accuracy(Matrix(0, 2), std::vector<int>{}), DataError);
}

TEST(Accuracy, ConfusionRowsAndTrace) {
  std::mt19937_64 rng(31);
  const Matrix p = testutil::random_simplex_rows(60, 4, rng);
  std::vector<int> labels(60);
  for (int& l : labels) l = static_cast<int>(rng() % 4);
  const Matrix c = confusion_matrix(p, labels, 4);
  double trace = 0, total = 0;
  for (int k = 0; k < 4; ++k) {
    double row = 0;
    for (int j = 0; j < 4; ++j) row += c(k, j);
    EXPECT_EQ(row, std::count(labels.begin(), labels.end(), k));
    trace += c(k, k);
    total += row;
  }
  EXPECT_DOUBLE_EQ(trace / total, overall_accuracy(p, labels));
  // Permuting samples changes nothing.
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> pl;
  for (std::size_t i : perm) pl.push_back(labels[i]);
  EXPECT_DOUBLE_EQ(overall_accuracy(p.gather_rows(perm), pl), overall_accuracy(p, labels));
}

TEST(Histogram, GroupsAndMeans) {
  const std::vector<std::int64_t> ids{0, 1, 2};
  const std::vector<double> ce{0.1, 0.1, 2.0};
  const auto h = ce_histogram_by_noise(ids, ce, ledger_of({false, false, true}));
  EXPECT_EQ(h.clean.count, 2u);
  EXPECT_EQ(h.noisy.count, 1u);
  EXPECT_NEAR(h.clean.mean, 0.1, 1e-15);
  EXPECT_NEAR(h.noisy.mean, 2.0, 1e-15);
  EXPECT_NEAR(h.separation(), 20.0, 1e-12);
  EXPECT_EQ(h.edges.size(), kHistogramBins + 1);
  EXPECT_DOUBLE_EQ(h.edges.back(), 2.0);
  EXPECT_EQ(h.noisy.histogram.back(), 1u);
  const auto all_clean = ce_histogram_by_noise(ids, ce, ledger_of({false, false, false}));
  EXPECT_EQ(all_clean.noisy.count, 0u);
  EXPECT_EQ(all_clean.clean.count, 3u);
  const std::vector<std::int64_t> wrong{0, 1, 7};
  EXPECT_THROW(ce_histogram_by_noise(wrong, ce, ledger_of({false, false, true})), DataError);
}

TEST(Js, ExamplesAndProperties) {
  EXPECT_DOUBLE_EQ(js_divergence(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
  EXPECT_NEAR(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(js_divergence(std::vector<double>{0.75, 0.25}, std::vector<double>{0.25, 0.75}),
              js_direct({0.75, 0.25}, {0.25, 0.75}), 1e-15);
  EXPECT_THROW(js_divergence(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), ShapeError);
  std::mt19937_64 rng(32);
  for (int t = 0; t < 300; ++t) {
    const Matrix a = testutil::random_simplex_rows(1, 2 + t % 7, rng), b = testutil::random_simplex_rows(1, 2 + t % 7, rng);
    const double ab = js_divergence(a.row(0), b.row(0));
    EXPECT_NEAR(ab, js_divergence(b.row(0), a.row(0)), 1e-15);
    EXPECT_LE(ab, std::log(2.0) + 1e-9);
    EXPECT_GT(ab, 0.0);
  }
}

TEST(Js, MeanOverSets) {
  const DistributionSet ref{{1, {0.6, 0.4}}, {2, {0.2, 0.8}}};
  const DistributionSet hard{{1, {1, 0}}, {2, {0, 1}}};
  EXPECT_DOUBLE_EQ(mean_js(ref, ref), 0.0);
  EXPECT_GT(mean_js(ref, hard), 0.0);
  EXPECT_NEAR(mean_js(ref, hard), 0.5 * (js_direct({0.6, 0.4}, {1, 0}) + js_direct({0.2, 0.8}, {0, 1})), 1e-15);
  EXPECT_THROW(mean_js(ref, DistributionSet{{1, {1, 0}}, {3, {0, 1}}}), DataError);
}

TEST(Export, EmbeddingsSchemaAndDeterminism) {
  data::SyntheticSpec spec;
  spec.samples_per_class = 12;
  spec.input_dim = 8;
  const auto ds = data::generate_synthetic(spec).train;
  model::DualBackboneConfig c;
  c.input_dim = 8;
  c.hidden_dims = {6};
  c.feature_dim_u = 3;
  c.num_classes = 5;
  std::mt19937_64 rng(4);
  const model::ModelState m(c, rng);
  const auto dir = testutil::scratch_dir("embed");
  export_embeddings(m, ds, nullptr, dir / "a.csv");
  export_embeddings(m, ds, nullptr, dir / "b.csv");
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  std::istringstream in(sa.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id,label,flipped,u_1,u_2,u_3");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto cells = parse_double_list(line, ',');
    EXPECT_EQ(cells.size(), 6u);
  }
  EXPECT_EQ(rows, ds.size());
}

TEST(Report, WritesArtifacts) {
  EvalReport r;
  r.overall_accuracy = 0.5;
  r.confusion = Matrix{{1, 1}, {0, 2}};
  const std::vector<std::int64_t> ids{0, 1};
  const std::vector<double> ce{0.2, 1.0};
  r.clean_vs_noisy_ce = ce_histogram_by_noise(ids, ce, ledger_of({false, true}));
  r.js_scores = std::vector<double>{0.1, 0.3};
  const auto dir = testutil::scratch_dir("report") / "nested";
  r.write(dir);
  for (const char* f : {"summary.txt", "confusion.csv", "ce_histogram.csv", "js_scores.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_NE(r.summary().find("overall_accuracy: 0.5"), std::string::npos);
}
