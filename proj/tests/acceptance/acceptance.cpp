// Acceptance harness: one PASS/FAIL line per criterion. Oracles below are
// written from the formulas and share no code with the library beyond the
// function under test.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nfer/checkpoint.hpp"
#include "nfer/core.hpp"
#include "nfer/data.hpp"
#include "nfer/elcl.hpp"
#include "nfer/eval.hpp"
#include "nfer/kernels.hpp"
#include "nfer/lde.hpp"
#include "nfer/losses.hpp"
#include "nfer/noise.hpp"
#include "nfer/trainer.hpp"

namespace fs = std::filesystem;
using namespace nfer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---- random instances -------------------------------------------------------

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

Matrix simplex_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (double& v : m.row(i)) s += (v = e(rng));
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

Matrix unit_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Matrix m = gaussian(r, c, rng);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (double v : m.row(i)) s += v * v;
    for (double& v : m.row(i)) v /= std::sqrt(s);
  }
  return m;
}

std::size_t uniform_index(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Neighbor sets of size k drawn without replacement from the other rows.
lde::NeighborLists random_neighbors(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  lde::NeighborLists out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::shuffle(others.begin(), others.end(), rng);
    out[i].assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

lde::ScoreLists random_scores(const lde::NeighborLists& nb, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  lde::ScoreLists out(nb.size());
  for (std::size_t i = 0; i < nb.size(); ++i)
    for (std::size_t t = 0; t < nb[i].size(); ++t) out[i].push_back(u(rng));
  return out;
}

// ---- scalar oracles ---------------------------------------------------------

double floored_log(double x) { return std::log(x < 1e-12 ? 1e-12 : x); }

std::vector<double> oracle_aggregate(const Matrix& p, const std::vector<std::size_t>& nu,
                                     const std::vector<std::size_t>& nv, const std::vector<double>& cu,
                                     const std::vector<double>& cv) {
  std::vector<double> d(p.cols());
  for (std::size_t j = 0; j < p.cols(); ++j) {
    double a = 0, sa = 0, b = 0, sb = 0;
    for (std::size_t t = 0; t < nu.size(); ++t) {
      a += cu[t] * p(nu[t], j);
      sa += cu[t];
    }
    for (std::size_t t = 0; t < nv.size(); ++t) {
      b += cv[t] * p(nv[t], j);
      sb += cv[t];
    }
    d[j] = 0.5 * (a / sa + b / sb);
  }
  return d;
}

std::vector<double> oracle_ema(const std::vector<double>& prev, const std::vector<double>& fresh, double omega) {
  std::vector<double> d(prev.size());
  double s = 0;
  for (std::size_t j = 0; j < d.size(); ++j) s += (d[j] = omega * prev[j] + (1 - omega) * fresh[j]);
  for (double& v : d) v /= s;
  return d;
}

int oracle_pseudo_label(std::span<const double> d, double delta) {
  int best = 0;
  for (std::size_t j = 1; j < d.size(); ++j)
    if (d[j] > d[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return d[static_cast<std::size_t>(best)] > delta ? best : elcl::kAmbiguous;
}

// Positives of anchor i: its own key when ambiguous, otherwise every key
// (batch or bank) carrying the same label. Everything else is a negative.
elcl::PairIndex oracle_pairs(const std::vector<int>& batch, const std::vector<int>& bank) {
  std::vector<int> all = batch;
  all.insert(all.end(), bank.begin(), bank.end());
  elcl::PairIndex p;
  p.num_keys = all.size();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    p.positives.emplace_back();
    p.negatives.emplace_back();
    for (std::size_t j = 0; j < all.size(); ++j) {
      const bool pos = batch[i] == elcl::kAmbiguous ? j == i : all[j] == batch[i];
      (pos ? p.positives.back() : p.negatives.back()).push_back(j);
    }
  }
  return p;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
  return s;
}

double oracle_direction(const Matrix& q, const Matrix& k, const elcl::PairIndex& p, double tau) {
  double total = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double neg = 0;
    for (std::size_t m : p.negatives[i]) neg += std::exp(dot(q.row(i), k.row(m)) / tau);
    double anchor = 0;
    for (std::size_t j : p.positives[i]) {
      const double e = std::exp(dot(q.row(i), k.row(j)) / tau);
      anchor -= std::log(e / (e + neg));
    }
    total += anchor / static_cast<double>(p.positives[i].size());
  }
  return total / static_cast<double>(q.rows());
}

double oracle_ce(const Matrix& p, const std::vector<int>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) s -= floored_log(p(i, static_cast<std::size_t>(y[i])));
  return s / static_cast<double>(p.rows());
}

double oracle_kl(const Matrix& d, const Matrix& p) {
  double s = 0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (d(i, j) > 0) s += d(i, j) * (std::log(d(i, j)) - floored_log(p(i, j)));
  return s / static_cast<double>(d.rows());
}

double oracle_mse(const Matrix& a, const Matrix& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return s / static_cast<double>(a.rows() * a.cols());
}

double oracle_js(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double m = 0.5 * (a[j] + b[j]);
    if (a[j] > 0) s += 0.5 * a[j] * std::log(a[j] / m);
    if (b[j] > 0) s += 0.5 * b[j] * std::log(b[j] / m);
  }
  return s;
}

std::vector<std::size_t> oracle_knn(std::span<const double> s, std::size_t k, std::size_t self) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (j != self) idx.push_back(j);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  idx.resize(k);
  return idx;
}

// ---- criteria ---------------------------------------------------------------

Outcome criterion_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  constexpr int kCases = 200;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& what, double err) { worst[what] = std::max(worst[what], err); };

  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = uniform_index(3, 10, rng), classes = uniform_index(2, 7, rng);
    const std::size_t k = uniform_index(1, n - 1, rng);
    const Matrix p = simplex_rows(n, classes, rng);

    // aggregation
    const auto nu = random_neighbors(n, k, rng), nv = random_neighbors(n, k, rng);
    const auto cu = random_scores(nu, rng), cv = random_scores(nv, rng);
    const Matrix d = lde::aggregate_targets(p, nu, nv, cu, cv);
    for (std::size_t i = 0; i < n; ++i) {
      const auto o = oracle_aggregate(p, nu[i], nv[i], cu[i], cv[i]);
      for (std::size_t j = 0; j < classes; ++j) note("aggregate_targets", std::abs(o[j] - d(i, j)));
    }

    // EMA
    std::vector<std::int64_t> ids(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<std::int64_t>(10 * i + 3);
      labels[i] = static_cast<int>(rng() % classes);
    }
    lde::TargetStore store(ids, labels, static_cast<int>(classes), 0.05);
    const double omega = std::uniform_real_distribution<double>(0.0, 0.999)(rng);
    std::map<std::int64_t, std::vector<double>> fresh;
    for (std::size_t i = 0; i < n; i += 2) fresh[ids[i]] = std::vector<double>(d.row(i).begin(), d.row(i).end());
    const Matrix before = store.targets();
    store.ema_update(fresh, omega);
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> prev(before.row(i).begin(), before.row(i).end());
      const auto o = fresh.count(ids[i]) ? oracle_ema(prev, fresh[ids[i]], omega) : prev;
      const auto got = store.get(ids[i]);
      for (std::size_t j = 0; j < classes; ++j) note("ema_update", std::abs(o[j] - got[j]));
    }

    // pseudo-labels and pairs
    const double delta = std::uniform_real_distribution<double>(0.2, 0.9)(rng);
    const Matrix targets = simplex_rows(n, classes, rng);
    const auto pl = elcl::pseudo_labels(targets, delta);
    for (std::size_t i = 0; i < n; ++i) note("pseudo_labels", pl[i] == oracle_pseudo_label(targets.row(i), delta) ? 0 : 1);
    std::vector<int> batch(n), bank(uniform_index(0, 12, rng));
    for (int& v : batch) v = static_cast<int>(rng() % (classes + 1)) - 1;
    for (int& v : bank) v = static_cast<int>(rng() % (classes + 1)) - 1;
    const auto pairs = elcl::build_pairs(batch, bank);
    const auto po = oracle_pairs(batch, bank);
    note("build_pairs", pairs.positives == po.positives && pairs.negatives == po.negatives ? 0 : 1);

    // contrastive loss
    const std::size_t dim = uniform_index(2, 8, rng);
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const Matrix qu = unit_rows(n, dim, rng), qv = unit_rows(n, dim, rng);
    const Matrix ku = unit_rows(n + bank.size(), dim, rng), kv = unit_rows(n + bank.size(), dim, rng);
    const auto el = elcl::el_loss(qu, qv, ku, kv, po, tau);
    const double o1 = oracle_direction(qu, kv, po, tau), o2 = oracle_direction(qv, ku, po, tau);
    note("el_loss", std::max({std::abs(el.l1 - o1), std::abs(el.l2 - o2), std::abs(el.total - (o1 + o2))}));

    // ce / kl / mse / total
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng() % classes);
    const Matrix pp = simplex_rows(n, classes, rng);
    const double ce = losses::ce_loss(pp, y).value, kl = losses::kl_loss(targets, pp).value;
    note("ce_loss", std::abs(ce - oracle_ce(pp, y)));
    note("kl_loss", std::abs(kl - oracle_kl(targets, pp)));
    const Matrix a = gaussian(n, 2 * dim, rng), b = gaussian(n, 2 * dim, rng);
    const double mse = losses::landmark_mse(a, b);
    note("landmark_mse", std::abs(mse - oracle_mse(a, b)));
    const double alpha = std::uniform_real_distribution<double>(0, 2)(rng), beta = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto tot = losses::total_loss(ce, mse, kl, el.total, alpha, beta);
    note("total_loss", std::abs(tot.total - (ce + mse + alpha * kl + beta * el.total)));

    // JS
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> r1(p.row(i).begin(), p.row(i).end()), r2(pp.row(i).begin(), pp.row(i).end());
      note("js_divergence", std::abs(eval::js_divergence(r1, r2) - oracle_js(r1, r2)));
    }
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  std::string detail = std::to_string(kCases) + " instances each, " + fmt(secs, 3) + " s; max abs err:";
  for (const auto& [name, err] : worst) {
    ok = ok && err <= 1e-9;
    detail += " " + name + "=" + fmt(err, 2);
  }
  return {ok, detail};
}

// Central differences of `f` with respect to every entry of `x`, compared to `grad`.
double fd_worst(Matrix& x, const Matrix& grad, const std::function<double()>& f, double h = 1e-6) {
  double worst = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double& v = x.values()[t];
    const double keep = v;
    v = keep + h;
    const double up = f();
    v = keep - h;
    const double dn = f();
    v = keep;
    const double num = (up - dn) / (2 * h), ana = grad.values()[t];
    worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-5}));
  }
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  constexpr std::size_t kClasses = 4, kProj = 8;
  double w_ce = 0, w_kl = 0, w_kld = 0, w_el = 0, w_lm = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = uniform_index(2, 4, rng);
    Matrix logits = gaussian(n, kClasses, rng);
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng() % kClasses);
    Matrix d = simplex_rows(n, kClasses, rng);

    Matrix g;
    losses::ce_loss(kernels::softmax_rows(logits), y, &g);
    w_ce = std::max(w_ce, fd_worst(logits, g, [&] { return losses::ce_loss(kernels::softmax_rows(logits), y).value; }));

    Matrix gl, gd;
    losses::kl_loss(d, kernels::softmax_rows(logits), &gl, &gd);
    w_kl = std::max(w_kl, fd_worst(logits, gl, [&] { return losses::kl_loss(d, kernels::softmax_rows(logits)).value; }));
    w_kld = std::max(w_kld, fd_worst(d, gd, [&] { return losses::kl_loss(d, kernels::softmax_rows(logits)).value; }));

    Matrix pred = gaussian(n, 10, rng), truth = gaussian(n, 10, rng), gm;
    losses::landmark_mse(pred, truth, &gm);
    w_lm = std::max(w_lm, fd_worst(pred, gm, [&] { return losses::landmark_mse(pred, truth); }));

    std::vector<int> labels(n), bank(uniform_index(0, 6, rng));
    for (int& v : labels) v = static_cast<int>(rng() % (kClasses + 1)) - 1;
    for (int& v : bank) v = static_cast<int>(rng() % (kClasses + 1)) - 1;
    const auto pairs = elcl::build_pairs(labels, bank);
    Matrix qu = unit_rows(n, kProj, rng), qv = unit_rows(n, kProj, rng);
    const Matrix ku = unit_rows(n + bank.size(), kProj, rng), kv = unit_rows(n + bank.size(), kProj, rng);
    const auto el = elcl::el_loss(qu, qv, ku, kv, pairs, 0.1, true);
    auto el_value = [&] { return elcl::el_loss(qu, qv, ku, kv, pairs, 0.1).total; };
    w_el = std::max({w_el, fd_worst(qu, el.grad_q_u, el_value), fd_worst(qv, el.grad_q_v, el_value)});
  }
  const double worst = std::max({w_ce, w_kl, w_kld, w_el, w_lm});
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          "max rel err ce=" + fmt(w_ce, 2) + " kl(logits)=" + fmt(w_kl, 2) + " kl(targets)=" + fmt(w_kld, 2) +
              " el=" + fmt(w_el, 2) + " lm=" + fmt(w_lm, 2) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion_simplex() {
  std::mt19937_64 rng(303);
  constexpr std::size_t kSamples = 24, kClasses = 6;
  std::vector<std::int64_t> ids(kSamples);
  std::vector<int> labels(kSamples);
  for (std::size_t i = 0; i < kSamples; ++i) {
    ids[i] = static_cast<std::int64_t>(i);
    labels[i] = static_cast<int>(i % kClasses);
  }
  lde::TargetStore store(ids, labels, kClasses, 0.05);
  double worst = 0;
  for (int epoch = 0; epoch < 10000; ++epoch) {
    const std::size_t n = uniform_index(4, 12, rng), k = uniform_index(1, n - 1, rng);
    const Matrix p = simplex_rows(n, kClasses, rng);
    const auto nu = random_neighbors(n, k, rng), nv = random_neighbors(n, k, rng);
    const Matrix d = lde::aggregate_targets(p, nu, nv, random_scores(nu, rng), random_scores(nv, rng));
    std::map<std::int64_t, std::vector<double>> fresh;
    for (std::size_t i = 0; i < n; ++i)
      fresh[ids[uniform_index(0, kSamples - 1, rng)]] = std::vector<double>(d.row(i).begin(), d.row(i).end());
    store.ema_update(fresh, std::uniform_real_distribution<double>(0.0, 0.999)(rng));
    for (std::size_t i = 0; i < kSamples; ++i) {
      double s = 0;
      for (double v : store.targets().row(i)) {
        worst = std::max(worst, -v);
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return {worst <= 1e-6, "10000 epochs, worst simplex violation " + fmt(worst, 2)};
}

data::Dataset labelled(std::size_t n, int classes) {
  data::Dataset ds;
  ds.num_classes = classes;
  ds.landmark_count = 1;
  for (std::size_t i = 0; i < n; ++i)
    ds.records.push_back({static_cast<std::int64_t>(i), {static_cast<double>(i)},
                          static_cast<int>(i % static_cast<std::size_t>(classes)), {0.5, 0.5}});
  return ds;
}

Outcome criterion_noise() {
  // Confusable-class map for the 8-class ordering used throughout
  // (anger, disgust, fear, happiness, sadness, surprise, neutral, contempt).
  const std::vector<int> table_map{1, 0, 5, 6, 6, 0, 4, 6};
  int checked = 0;
  std::string bad;
  for (std::size_t n : {10u, 100u, 1000u}) {
    const auto ds = labelled(n, 8);
    for (int tenths : {1, 2, 3}) {
      const std::size_t expect = static_cast<std::size_t>(tenths) * n / 10;
      for (std::uint64_t seed : {0u, 1u, 2u}) {
        const double ratio = tenths / 10.0;
        const auto sym = noise::inject_symmetric(ds, ratio, seed);
        const auto asym = noise::inject_asymmetric(ds, ratio, noise::default_flip_map(8), seed);
        for (const auto* nd : {&sym, &asym}) {
          std::size_t flips = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const auto& e = nd->ledger.entries[i];
            const int given = nd->dataset.records[i].label;
            if (e.original != ds.records[i].label || e.injected != given) bad = "ledger mismatch";
            if (given != e.original) ++flips;
            if (e.flipped() && e.injected == e.original) bad = "self flip";
            if (nd == &asym && e.flipped() && e.injected != table_map[static_cast<std::size_t>(e.original)])
              bad = "asymmetric flip off the map";
          }
          if (flips != expect)
            bad = "n=" + std::to_string(n) + " ratio=" + fmt(ratio) + ": " + std::to_string(flips) + " flips, expected " +
                  std::to_string(expect);
          ++checked;
        }
      }
    }
  }
  if (noise::default_flip_map(8) != table_map) bad = "default 8-class flip map differs";
  return {bad.empty(), bad.empty() ? std::to_string(checked) + " injections exact" : bad};
}

Outcome criterion_knn() {
  std::mt19937_64 rng(505);
  std::size_t mismatches = 0, rows = 0;
  for (int b = 0; b < 1000; ++b) {
    const std::size_t n = uniform_index(2, 32, rng), k = uniform_index(1, n - 1, rng);
    Matrix s(n, n);
    // Coarse values so ties are common.
    std::uniform_int_distribution<int> level(-4, 4);
    for (double& v : s.values()) v = level(rng) / 4.0;
    const auto all = lde::knn_all(s, k);
    for (std::size_t i = 0; i < n; ++i, ++rows) {
      const auto o = oracle_knn(s.row(i), k, i);
      if (all[i] != o) ++mismatches;
      if (lde::knn_neighbors(s.row(i), k, i) != o) ++mismatches;
    }
  }
  return {mismatches == 0, "1000 batches, " + std::to_string(rows) + " rows, " + std::to_string(mismatches) + " mismatches"};
}

// ---- desk-scale benchmark ---------------------------------------------------

struct BenchRun {
  double test_accuracy = 0;
  double ce_clean = 0, ce_flipped = 0;
  double js_targets = 0, js_noisy = 0;
  double seconds = 0;
};

RunConfig bench_config(const std::string& ablation, std::uint64_t seed) {
  RunConfig cfg;
  cfg.hyper.epochs = 40;
  cfg.hyper.batch_size = 64;
  cfg.hyper.seed = seed;
  cfg.ablation = AblationFlags::parse(ablation);
  return cfg;
}

data::SyntheticSpec bench_data_spec() {
  data::SyntheticSpec spec;
  spec.num_classes = 5;
  spec.samples_per_class = 250;  // 200 train + 50 test per class
  return spec;
}

BenchRun bench_run(const data::SplitDataset& ds, const std::string& ablation, std::uint64_t seed, const fs::path& dir) {
  const auto t0 = Clock::now();
  const auto noisy = noise::inject_symmetric(ds.train, 0.3, seed);
  trainer::FitOptions opt;
  opt.output_dir = dir;
  opt.ledger = &noisy.ledger;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto res = trainer::fit(bench_config(ablation, seed), noisy.dataset, &ds.test, opt);
  BenchRun r;
  r.seconds = seconds_since(t0);

  // Recompute the diagnostics from the final checkpoint.
  const auto ckpt = read_checkpoint(*res.final_checkpoint);
  const auto model = model_from_checkpoint(ckpt);
  const Matrix pt = eval::predict(model, ds.test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    const auto row = pt.row(i);
    hits += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == ds.test.records[i].label;
  }
  r.test_accuracy = static_cast<double>(hits) / static_cast<double>(ds.test.size());

  const Matrix ptr = eval::predict(model, noisy.dataset);
  std::map<std::int64_t, std::size_t> store_row;
  for (std::size_t i = 0; i < ckpt.store_ids.size(); ++i) store_row[ckpt.store_ids[i]] = i;
  double sc = 0, sf = 0, jt = 0, jn = 0;
  std::size_t nc = 0, nf = 0;
  for (std::size_t i = 0; i < noisy.dataset.size(); ++i) {
    const auto& e = noisy.ledger.entries[i];
    const double ce = -floored_log(ptr(i, static_cast<std::size_t>(noisy.dataset.records[i].label)));
    if (!e.flipped()) {
      sc += ce;
      ++nc;
      continue;
    }
    sf += ce;
    ++nf;
    std::vector<double> clean(5, 0.0), given(5, 0.0);
    clean[static_cast<std::size_t>(e.original)] = 1.0;
    given[static_cast<std::size_t>(e.injected)] = 1.0;
    const auto t = ckpt.store_targets.row(store_row.at(e.id));
    jt += oracle_js(std::vector<double>(t.begin(), t.end()), clean);
    jn += oracle_js(given, clean);
  }
  r.ce_clean = sc / static_cast<double>(nc);
  r.ce_flipped = sf / static_cast<double>(nf);
  r.js_targets = jt / static_cast<double>(nf);
  r.js_noisy = jn / static_cast<double>(nf);
  return r;
}

struct Bench {
  std::map<std::string, std::vector<BenchRun>> runs;
  double mean_acc(const std::string& a) const {
    double s = 0;
    for (const auto& r : runs.at(a)) s += r.test_accuracy;
    return s / static_cast<double>(runs.at(a).size());
  }
  double mean_ratio(const std::string& a) const {
    double s = 0;
    for (const auto& r : runs.at(a)) s += r.ce_flipped / r.ce_clean;
    return s / static_cast<double>(runs.at(a).size());
  }
  double max_seconds() const {
    double m = 0;
    for (const auto& [a, rs] : runs)
      for (const auto& r : rs) m = std::max(m, r.seconds);
    return m;
  }
};

Bench run_bench(const fs::path& workdir) {
  const auto ds = data::generate_synthetic(bench_data_spec());
  Bench b;
  for (const std::string ablation : {"baseline", "ld", "ld+lm", "ld+lm+el", "full"}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      std::string tag = ablation;
      std::replace(tag.begin(), tag.end(), '+', '_');
      const auto r = bench_run(ds, ablation, seed, workdir / ("bench_" + tag + "_" + std::to_string(seed)));
      std::cout << "  bench " << std::left << std::setw(9) << ablation << " seed " << seed << ": test acc "
                << fmt(r.test_accuracy) << ", CE flipped/clean " << fmt(r.ce_flipped) << "/" << fmt(r.ce_clean)
                << ", JS targets " << fmt(r.js_targets) << " (" << fmt(r.seconds, 3) << " s)\n"
                << std::flush;
      b.runs[ablation].push_back(r);
    }
  }
  return b;
}

Outcome criterion_robustness(const Bench& b) {
  const double full = b.mean_acc("full"), base = b.mean_acc("baseline");
  const double gap = 100.0 * (full - base);
  const bool fast = b.max_seconds() < 300.0;
  return {gap >= 5.0 && fast, "full " + fmt(100 * full) + "% vs baseline " + fmt(100 * base) + "% (gap " + fmt(gap, 3) +
                                  " points), slowest run " + fmt(b.max_seconds(), 3) + " s"};
}

Outcome criterion_monotone(const Bench& b) {
  const double ld = b.mean_acc("ld"), ldlm = b.mean_acc("ld+lm"), el = b.mean_acc("ld+lm+el"), full = b.mean_acc("full");
  return {ldlm >= ld && full >= el, "ld " + fmt(100 * ld) + "% -> ld+lm " + fmt(100 * ldlm) + "%; ld+lm+el " +
                                        fmt(100 * el) + "% -> +pl " + fmt(100 * full) + "%"};
}

Outcome criterion_memorization(const Bench& b) {
  const double full = b.mean_ratio("full"), base = b.mean_ratio("baseline");
  return {full >= 2.0 && base < 1.5,
          "CE flipped/clean ratio: full " + fmt(full) + " (need >= 2), baseline " + fmt(base) + " (need < 1.5)"};
}

Outcome criterion_targets(const Bench& b) {
  double jt = 0, jn = 0;
  for (const auto& r : b.runs.at("full")) {
    jt += r.js_targets;
    jn += r.js_noisy;
  }
  jt /= static_cast<double>(b.runs.at("full").size());
  jn /= static_cast<double>(b.runs.at("full").size());
  return {jt < jn, "flipped samples: JS(targets, clean) " + fmt(jt) + " vs JS(noisy label, clean) " + fmt(jn)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_determinism(const fs::path& workdir) {
  const std::string bin = NFER_CLI_PATH;
  const fs::path dir = workdir / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  if (shell(bin + " gen-data --out " + q(dir / "data") + " --per-class 250 > /dev/null") != 0)
    return {false, "gen-data failed"};
  std::ofstream(dir / "bench.cfg") << "epochs = 40\nbatch_size = 64\n";
  std::string acc[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path out = dir / ("run" + std::to_string(r));
    const fs::path stdout_file = dir / ("stdout" + std::to_string(r) + ".txt");
    const int code = shell(bin + " train --quiet --config " + q(dir / "bench.cfg") + " --data " + q(dir / "data") +
                           " --noise symmetric:0.3 --seed 7 --out " + q(out) + " > " + q(stdout_file));
    if (code != 0) return {false, "train exited with " + std::to_string(code)};
    acc[r] = slurp(stdout_file);
  }
  const std::string log0 = slurp(dir / "run0" / "log.csv"), log1 = slurp(dir / "run1" / "log.csv");
  const bool same_log = !log0.empty() && log0 == log1;
  const bool same_metrics = slurp(dir / "run0" / "metrics.csv") == slurp(dir / "run1" / "metrics.csv");
  const bool same_acc = !acc[0].empty() && acc[0] == acc[1];
  std::string last = acc[0];
  while (!last.empty() && last.back() == '\n') last.pop_back();
  return {same_log && same_metrics && same_acc,
          std::string("log.csv ") + (same_log ? "identical" : "differs") + ", metrics.csv " +
              (same_metrics ? "identical" : "differs") + ", " + (same_acc ? last : "final accuracy differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path workdir = fs::temp_directory_path() / "nfer_acceptance";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for benchmark runs");
  app.add_option("--only", only, "Run just these criteria (1-10)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  std::map<int, Outcome> results;
  auto report = [&](int c, const Outcome& o) {
    results[c] = o;
    std::cout << "criterion " << std::setw(2) << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << '\n'
              << std::flush;
  };
  auto guarded = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      report(c, f());
    } catch (const std::exception& e) {
      report(c, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, criterion_oracles);
  guarded(2, criterion_gradients);
  guarded(3, criterion_simplex);
  guarded(4, criterion_noise);
  guarded(5, criterion_knn);
  if (wanted(6) || wanted(7) || wanted(8) || wanted(9)) {
    std::optional<Bench> bench;
    try {
      bench = run_bench(workdir);
    } catch (const std::exception& e) {
      for (int c = 6; c <= 9; ++c)
        if (wanted(c)) report(c, {false, std::string("benchmark failed: ") + e.what()});
    }
    if (bench) {
      guarded(6, [&] { return criterion_robustness(*bench); });
      guarded(7, [&] { return criterion_monotone(*bench); });
      guarded(8, [&] { return criterion_memorization(*bench); });
      guarded(9, [&] { return criterion_targets(*bench); });
    }
  }
  guarded(10, [&] { return criterion_determinism(workdir); });

  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& kv) { return !kv.second.pass; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
