#include "nfer/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "nfer/kernels.hpp"

namespace nfer::trainer {

double lr_at(long long step, long long total_steps, double lr0) {
  if (total_steps <= 0) throw RangeError("total_steps", "must be positive");
  if (step < 0 || step > total_steps) throw RangeError("step", "outside [0, total_steps]");
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<std::int64_t> ids_of(const data::Dataset& d) {
  std::vector<std::int64_t> ids;
  ids.reserve(d.size());
  for (const auto& r : d.records) ids.push_back(r.id);
  return ids;
}

}  // namespace

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 1)));
}

model::DualBackboneConfig model_config_for(const RunConfig& cfg, const data::Dataset& train) {
  model::DualBackboneConfig mc;
  mc.input_dim = train.input_dim();
  mc.hidden_dims.assign(cfg.model.hidden_dims.begin(), cfg.model.hidden_dims.end());
  mc.feature_dim_u = mc.feature_dim_v = static_cast<std::size_t>(cfg.model.feature_dim);
  mc.proj_dim = static_cast<std::size_t>(cfg.model.proj_dim);
  mc.momentum = cfg.model.momentum;
  mc.num_classes = static_cast<std::size_t>(train.num_classes);
  mc.landmark_count = static_cast<std::size_t>(train.landmark_count);
  return mc;
}

Trainer::Trainer(RunConfig config, const data::Dataset& train, const data::Dataset* test)
    : config_(std::move(config)), train_(train), test_(test), sampler_(train.labels(), train.num_classes) {
  config_.hyper.validate();
  config_.model.validate();
  config_.ablation.validate();
  train_.validate();
  if (test_) {
    test_->validate();
    if (test_->input_dim() != train_.input_dim() || test_->num_classes != train_.num_classes)
      throw ShapeError("test set shape differs from training set");
  }
  std::mt19937_64 rng(config_.hyper.seed);
  model_ = model::ModelState(model_config_for(config_, train_), rng);
  scorer_u_ = lde::ContributionScorer(model_.config().feature_dim_u, rng);
  scorer_v_ = lde::ContributionScorer(model_.config().feature_dim_v, rng);
  adam_ = nn::Adam(trainable_parameters());
  const auto ids = ids_of(train_);
  const auto labels = train_.labels();
  store_ = lde::TargetStore(ids, labels, train_.num_classes, config_.model.target_smoothing);
  const auto cap = static_cast<std::size_t>(config_.model.bank_capacity);
  bank_u_ = elcl::MemoryBank(cap, model_.config().proj_dim);
  bank_v_ = elcl::MemoryBank(cap, model_.config().proj_dim);
}

std::size_t Trainer::steps_per_epoch() const noexcept {
  const auto bs = static_cast<std::size_t>(config_.hyper.batch_size);
  return (train_.size() + bs - 1) / bs;
}

long long Trainer::total_steps() const noexcept {
  return static_cast<long long>(steps_per_epoch()) * config_.hyper.epochs;
}

std::vector<nn::Parameter*> Trainer::trainable_parameters() {
  auto ps = model_.parameters();
  for (auto* p : scorer_u_.parameters()) ps.push_back(p);
  for (auto* p : scorer_v_.parameters()) ps.push_back(p);
  return ps;
}

void Trainer::abort_non_finite(const std::vector<std::int64_t>& ids, const Matrix& targets, const Matrix& sim_u,
                               const Matrix& sim_v, const std::string& what) const {
  std::ostringstream msg;
  msg << what << " at step " << global_step_ << "; batch ids:";
  for (auto id : ids) msg << ' ' << id;
  if (failure_dump_) {
    std::ofstream out(*failure_dump_);
    out << msg.str() << "\n\n[targets]\n";
    for (std::size_t i = 0; i < targets.rows(); ++i) out << ids[i] << ',' << join_doubles(targets.row(i), ',') << '\n';
    out << "\n[similarity_u]\n";
    for (std::size_t i = 0; i < sim_u.rows(); ++i) out << join_doubles(sim_u.row(i), ',') << '\n';
    out << "\n[similarity_v]\n";
    for (std::size_t i = 0; i < sim_v.rows(); ++i) out << join_doubles(sim_v.row(i), ',') << '\n';
    msg << " (dump written to " << failure_dump_->string() << ")";
  }
  throw NumericError(msg.str());
}

BatchResult Trainer::forward_backward(std::span<const std::size_t> indices, bool backward) {
  const auto& hp = config_.hyper;
  const auto& ab = config_.ablation;
  BatchResult res;
  std::vector<int> labels;
  for (std::size_t i : indices) {
    res.ids.push_back(train_.records[i].id);
    labels.push_back(train_.records[i].label);
  }
  const Matrix x = train_.inputs(indices);
  const Matrix lm_truth = train_.landmarks(indices);

  nn::Mlp::Cache cache_u, cache_v;
  const auto ex = model_.forward_expression(x, &cache_u);
  const auto lmk = model_.forward_landmark(x, &cache_v);

  Matrix dlogits, dlm;
  const auto ce = losses::ce_loss(ex.p, labels, backward ? &dlogits : nullptr);
  const double lm = losses::landmark_mse(lmk.landmark_pred, lm_truth, backward ? &dlm : nullptr);

  res.targets = store_.gather(res.ids);
  double kl = 0.0;
  Matrix sim_u, sim_v, dlogits_kl, dtargets;
  lde::NeighborLists nb_u, nb_v;
  lde::ScoreLists sc_u, sc_v;
  lde::ContributionScorer::Cache scache_u, scache_v;
  if (ab.use_ld) {
    const auto k = static_cast<std::size_t>(hp.k_neighbors);
    sim_u = lde::cosine_similarity_matrix(ex.u);
    nb_u = lde::knn_all(sim_u, k);
    sc_u = scorer_u_.scores(ex.u, nb_u, &scache_u);
    if (ab.use_lm_in_lde) {
      sim_v = lde::cosine_similarity_matrix(lmk.v);
      nb_v = lde::knn_all(sim_v, k);
      sc_v = scorer_v_.scores(lmk.v, nb_v, &scache_v);
    } else {
      nb_v = nb_u;
      sc_v = sc_u;
    }
    res.fresh_targets = lde::aggregate_targets(ex.p, nb_u, nb_v, sc_u, sc_v);
    auto tv = res.targets.values();
    auto fv = res.fresh_targets.values();
    for (std::size_t t = 0; t < tv.size(); ++t) tv[t] = hp.omega * tv[t] + (1.0 - hp.omega) * fv[t];
    kl = losses::kl_loss(res.targets, ex.p, backward ? &dlogits_kl : nullptr, backward ? &dtargets : nullptr).value;
  }

  res.pseudo_labels = ab.use_pseudo_labels ? elcl::pseudo_labels(res.targets, hp.delta) : labels;

  double el = 0.0;
  model::ProjectionPass pass_u, pass_v;
  elcl::ElLossResult el_res;
  if (ab.use_el) {
    pass_u = model::project_for_training(ex.u, model_.query_u);
    pass_v = model::project_for_training(lmk.v, model_.query_v);
    res.keys_u = model_.key_expression(x);
    res.keys_v = model_.key_landmark(x);
    const Matrix all_u = res.keys_u.vstack(bank_u_.keys());
    const Matrix all_v = res.keys_v.vstack(bank_v_.keys());
    const auto bank_labels = bank_u_.labels();
    const auto pairs = elcl::build_pairs(res.pseudo_labels, bank_labels);
    el_res = elcl::el_loss(pass_u.q, pass_v.q, all_u, all_v, pairs, hp.tau, backward);
    el = el_res.total;
  }

  try {
    res.loss = losses::total_loss(ce.value, lm, kl, el, hp.alpha, hp.beta);
  } catch (const NumericError& e) {
    abort_non_finite(res.ids, res.targets, sim_u, sim_v, e.what());
  }

  if (backward) {
    if (ab.use_ld) {
      dlogits_kl *= hp.alpha;
      dlogits += dlogits_kl;
      // Only the fresh part of the mixed target depends on the scores.
      dtargets *= hp.alpha * (1.0 - hp.omega);
      const auto g = lde::aggregate_targets_backward(ex.p, nb_u, nb_v, sc_u, sc_v, dtargets);
      if (ab.use_lm_in_lde) {
        scorer_u_.backward(scache_u, g.scores_u);
        scorer_v_.backward(scache_v, g.scores_v);
      } else {
        lde::ScoreLists both = g.scores_u;
        for (std::size_t i = 0; i < both.size(); ++i)
          for (std::size_t t = 0; t < both[i].size(); ++t) both[i][t] += g.scores_v[i][t];
        scorer_u_.backward(scache_u, both);
      }
    }
    Matrix du = model_.classifier.backward(ex.u, dlogits);
    Matrix dv = model_.landmark_head.backward(lmk.v, dlm);
    if (ab.use_el) {
      el_res.grad_q_u *= hp.beta;
      el_res.grad_q_v *= hp.beta;
      du += model::project_backward(pass_u, model_.query_u, el_res.grad_q_u);
      dv += model::project_backward(pass_v, model_.query_v, el_res.grad_q_v);
    }
    model_.expression_backbone.backward(cache_u, du);
    model_.landmark_backbone.backward(cache_v, dv);
  }
  return res;
}

BatchResult Trainer::train_step(std::span<const std::size_t> indices, double lr) {
  auto params = trainable_parameters();
  nn::zero_grads(params);
  BatchResult res = forward_backward(indices, true);
  adam_.step(params, lr);
  model_.momentum_update(config_.model.momentum);
  if (config_.ablation.use_el) {
    bank_u_.enqueue(res.keys_u, res.pseudo_labels);
    bank_v_.enqueue(res.keys_v, res.pseudo_labels);
  }
  if (config_.ablation.use_ld) {
    // Last visit within the epoch wins.
    for (std::size_t i = 0; i < res.ids.size(); ++i) {
      std::vector<double> d(res.fresh_targets.row(i).begin(), res.fresh_targets.row(i).end());
      renormalize(d);
      epoch_fresh_[res.ids[i]] = std::move(d);
    }
  }
  ++global_step_;
  return res;
}

EpochMetrics Trainer::train_epoch(std::vector<StepLog>* step_log) {
  const auto& hp = config_.hyper;
  if (epochs_completed_ >= hp.epochs) throw ConfigError("all configured epochs are already complete");
  const int epoch = epochs_completed_;
  auto rng = epoch_rng(hp.seed, epoch);
  const auto weights = data::progressive_sampling_weights(epoch, {train_.class_counts(), hp.epochs});
  const std::size_t steps = steps_per_epoch();
  const long long total = total_steps();
  EpochMetrics m;
  m.epoch = epoch;
  epoch_fresh_.clear();
  for (std::size_t s = 0; s < steps; ++s) {
    const auto batch = sampler_.sample(weights, static_cast<std::size_t>(hp.batch_size), rng);
    const long long step = global_step_;
    const auto res = train_step(batch, lr_at(step, total, hp.lr));
    if (step_log) step_log->push_back({step, res.loss});
    m.mean_loss.ce += res.loss.ce;
    m.mean_loss.kl += res.loss.kl;
    m.mean_loss.lm += res.loss.lm;
    m.mean_loss.el += res.loss.el;
    m.mean_loss.total += res.loss.total;
  }
  const double inv = 1.0 / static_cast<double>(steps);
  m.mean_loss.ce *= inv;
  m.mean_loss.kl *= inv;
  m.mean_loss.lm *= inv;
  m.mean_loss.el *= inv;
  m.mean_loss.total *= inv;
  store_.ema_update(epoch_fresh_, hp.omega);
  epoch_fresh_.clear();
  ++epochs_completed_;
  const auto labels = train_.labels();
  m.train_accuracy = eval::overall_accuracy(predict_train(), labels);
  if (test_) m.test_accuracy = eval::overall_accuracy(predict_test(), test_->labels());
  return m;
}

Matrix Trainer::predict_train() const { return eval::predict(model_, train_); }

Matrix Trainer::predict_test() const {
  if (!test_) throw DataError("no test set attached");
  return eval::predict(model_, *test_);
}

Checkpoint Trainer::snapshot(bool include_banks) const {
  auto& self = const_cast<Trainer&>(*this);
  Checkpoint c;
  c.config = config_;
  c.model_config = model_.config();
  c.epochs_completed = epochs_completed_;
  c.global_step = global_step_;
  for (auto* p : self.model_.all_parameters()) c.parameters.push_back(p->value);
  for (auto* p : self.scorer_u_.parameters()) c.parameters.push_back(p->value);
  for (auto* p : self.scorer_v_.parameters()) c.parameters.push_back(p->value);
  c.adam_steps = adam_.steps();
  c.adam_m = adam_.first_moments();
  c.adam_v = adam_.second_moments();
  c.store_ids = store_.ids();
  c.store_targets = store_.targets();
  c.store_epoch = store_.epoch();
  c.banks_serialized = include_banks;
  if (include_banks) {
    c.bank_u = bank_u_;
    c.bank_v = bank_v_;
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (serialize_config(ckpt.config) != serialize_config(config_))
    throw ConfigError("checkpoint was produced with a different configuration");
  std::vector<nn::Parameter*> params = model_.all_parameters();
  for (auto* p : scorer_u_.parameters()) params.push_back(p);
  for (auto* p : scorer_v_.parameters()) params.push_back(p);
  if (ckpt.parameters.size() != params.size()) throw ShapeError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ckpt.parameters[i].rows() != params[i]->value.rows() || ckpt.parameters[i].cols() != params[i]->value.cols())
      throw ShapeError("checkpoint parameter " + std::to_string(i) + " has the wrong shape");
    params[i]->value = ckpt.parameters[i];
  }
  if (ckpt.adam_m.size() != adam_.first_moments().size()) throw ShapeError("checkpoint optimizer state mismatch");
  adam_.first_moments() = ckpt.adam_m;
  adam_.second_moments() = ckpt.adam_v;
  adam_.set_steps(ckpt.adam_steps);
  store_.assign(ckpt.store_ids, ckpt.store_targets, ckpt.store_epoch);
  if (ckpt.banks_serialized) {
    bank_u_ = ckpt.bank_u;
    bank_v_ = ckpt.bank_v;
  } else {
    bank_u_.clear();
    bank_v_.clear();
  }
  epochs_completed_ = ckpt.epochs_completed;
  global_step_ = ckpt.global_step;
}

eval::EvalReport evaluate_run(const model::ModelState& model, const data::Dataset& train, const data::Dataset* test,
                              const noise::NoiseLedger* ledger, const lde::TargetStore* store) {
  eval::EvalReport rep;
  const data::Dataset& scored = test ? *test : train;
  const Matrix p = eval::predict(model, scored);
  const auto labels = scored.labels();
  rep.overall_accuracy = eval::overall_accuracy(p, labels);
  rep.confusion = eval::confusion_matrix(p, labels, scored.num_classes);
  if (ledger) {
    const Matrix ptrain = eval::predict(model, train);
    const auto ce = eval::per_sample_ce(ptrain, train.labels());
    std::vector<std::int64_t> ids;
    for (const auto& r : train.records) ids.push_back(r.id);
    rep.clean_vs_noisy_ce = eval::ce_histogram_by_noise(ids, ce, *ledger);
    if (store) {
      std::vector<double> js;
      for (const auto& e : ledger->entries) {
        if (!e.flipped() || !store->contains(e.id)) continue;
        const auto clean = OneHotLabel(e.original, store->num_classes()).expand();
        js.push_back(eval::js_divergence(store->get(e.id), clean));
      }
      rep.js_scores = std::move(js);
    }
  }
  return rep;
}

namespace {

void append_log(const std::filesystem::path& path, const std::vector<StepLog>& rows) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  if (fresh) out << "step,ce,kl,lm,el,total\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_double(r.loss.ce) << ',' << format_double(r.loss.kl) << ','
        << format_double(r.loss.lm) << ',' << format_double(r.loss.el) << ',' << format_double(r.loss.total) << '\n';
}

void append_metrics(const std::filesystem::path& path, const EpochMetrics& m) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  if (fresh) out << "epoch,ce,kl,lm,el,total,train_accuracy,test_accuracy\n";
  out << m.epoch << ',' << format_double(m.mean_loss.ce) << ',' << format_double(m.mean_loss.kl) << ','
      << format_double(m.mean_loss.lm) << ',' << format_double(m.mean_loss.el) << ','
      << format_double(m.mean_loss.total) << ',' << format_double(m.train_accuracy) << ','
      << (m.test_accuracy ? format_double(*m.test_accuracy) : std::string()) << '\n';
}

}  // namespace

FitResult fit(const RunConfig& config, const data::Dataset& train, const data::Dataset* test,
              const FitOptions& options) {
  Trainer tr(config, train, test);
  if (options.resume_from) tr.restore(read_checkpoint(*options.resume_from));
  const bool io = !options.output_dir.empty();
  if (io) {
    std::filesystem::create_directories(options.output_dir);
    std::ofstream(options.output_dir / "config.snapshot") << serialize_config(config);
    tr.set_failure_dump(options.output_dir / "failure-dump.txt");
  }
  FitResult result;
  while (tr.epochs_completed() < config.hyper.epochs) {
    std::vector<StepLog> log;
    const auto m = tr.train_epoch(&log);
    result.history.push_back(m);
    if (io) {
      append_log(options.output_dir / "log.csv", log);
      append_metrics(options.output_dir / "metrics.csv", m);
      if (options.write_checkpoints) {
        const auto path = options.output_dir / ("ckpt-" + std::to_string(tr.epochs_completed()));
        write_checkpoint(path, tr.snapshot(options.serialize_banks));
        result.final_checkpoint = path;
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  result.final_report = evaluate_run(tr.model(), train, test, options.ledger, &tr.store());
  if (io) {
    result.final_report.write(options.output_dir / "report");
    tr.store().export_csv(options.output_dir / "report" / "targets.csv");
  }
  return result;
}

}  // namespace nfer::trainer
