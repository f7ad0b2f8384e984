#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nfer/checkpoint.hpp"
#include "nfer/core.hpp"
#include "nfer/data.hpp"
#include "nfer/elcl.hpp"
#include "nfer/eval.hpp"
#include "nfer/lde.hpp"
#include "nfer/losses.hpp"
#include "nfer/model.hpp"
#include "nfer/nn.hpp"
#include "nfer/noise.hpp"

namespace nfer::trainer {

/// lr0 * (1 - step / total_steps).
double lr_at(long long step, long long total_steps, double lr0);

/// Batch-sampling stream for one epoch. Each epoch gets its own stream so a
/// resumed run draws the same batches.
std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch);

struct StepLog {
  long long step = 0;
  losses::LossReport loss;
};

struct EpochMetrics {
  int epoch = 0;
  losses::LossReport mean_loss;
  double train_accuracy = 0.0;  // against the (possibly noisy) training labels
  std::optional<double> test_accuracy;

  friend bool operator==(const EpochMetrics& a, const EpochMetrics& b) {
    return a.epoch == b.epoch && a.mean_loss.total == b.mean_loss.total && a.mean_loss.ce == b.mean_loss.ce &&
           a.mean_loss.kl == b.mean_loss.kl && a.mean_loss.lm == b.mean_loss.lm && a.mean_loss.el == b.mean_loss.el &&
           a.train_accuracy == b.train_accuracy && a.test_accuracy == b.test_accuracy;
  }
};

/// Outcome of one forward (and optionally backward) pass over a batch.
struct BatchResult {
  losses::LossReport loss;
  std::vector<std::int64_t> ids;
  std::vector<int> pseudo_labels;
  Matrix targets;        // targets used by the KL term (EMA history mixed with fresh)
  Matrix fresh_targets;  // empty unless LD is on
  Matrix keys_u;         // empty unless EL is on
  Matrix keys_v;
};

model::DualBackboneConfig model_config_for(const RunConfig& cfg, const data::Dataset& train);

/// Owns the mutable training state: model, contribution scorers, optimizer,
/// EMA target store and memory banks. Single-threaded by contract.
class Trainer {
 public:
  Trainer(RunConfig config, const data::Dataset& train, const data::Dataset* test = nullptr);

  const RunConfig& config() const noexcept { return config_; }
  const model::ModelState& model() const noexcept { return model_; }
  model::ModelState& model() noexcept { return model_; }
  lde::ContributionScorer& scorer_u() noexcept { return scorer_u_; }
  lde::ContributionScorer& scorer_v() noexcept { return scorer_v_; }
  const lde::TargetStore& store() const noexcept { return store_; }
  const elcl::MemoryBank& bank_u() const noexcept { return bank_u_; }
  const elcl::MemoryBank& bank_v() const noexcept { return bank_v_; }
  int epochs_completed() const noexcept { return epochs_completed_; }
  long long global_step() const noexcept { return global_step_; }
  std::size_t steps_per_epoch() const noexcept;
  long long total_steps() const noexcept;

  /// Optimizer-visible parameters in checkpoint order.
  std::vector<nn::Parameter*> trainable_parameters();

  /// Losses for the training records at `indices`. With `backward` set,
  /// parameter gradients are accumulated (not zeroed first).
  BatchResult forward_backward(std::span<const std::size_t> indices, bool backward);

  /// Zero grads, forward/backward, Adam step, momentum update, bank enqueue.
  BatchResult train_step(std::span<const std::size_t> indices, double lr);

  /// One epoch of progressive-balanced batches followed by the EMA update.
  /// Per-step losses are appended to `step_log` when given.
  EpochMetrics train_epoch(std::vector<StepLog>* step_log = nullptr);

  /// Where the non-finite-loss diagnostic dump goes; unset means no dump file.
  void set_failure_dump(std::filesystem::path path) { failure_dump_ = std::move(path); }

  Checkpoint snapshot(bool include_banks = true) const;
  void restore(const Checkpoint& ckpt);

  Matrix predict_train() const;
  Matrix predict_test() const;

 private:
  [[noreturn]] void abort_non_finite(const std::vector<std::int64_t>& ids, const Matrix& targets,
                                     const Matrix& sim_u, const Matrix& sim_v, const std::string& what) const;

  RunConfig config_;
  const data::Dataset& train_;
  const data::Dataset* test_;
  model::ModelState model_;
  lde::ContributionScorer scorer_u_;
  lde::ContributionScorer scorer_v_;
  nn::Adam adam_;
  lde::TargetStore store_;
  elcl::MemoryBank bank_u_;
  elcl::MemoryBank bank_v_;
  data::BatchSampler sampler_;
  std::map<std::int64_t, std::vector<double>> epoch_fresh_;
  int epochs_completed_ = 0;
  long long global_step_ = 0;
  std::optional<std::filesystem::path> failure_dump_;
};

struct FitOptions {
  /// Run directory; empty keeps everything in memory.
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> resume_from;
  bool write_checkpoints = true;
  bool serialize_banks = true;
  /// Noise provenance for the final diagnostics (optional).
  const noise::NoiseLedger* ledger = nullptr;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct FitResult {
  std::vector<EpochMetrics> history;
  eval::EvalReport final_report;
  std::optional<std::filesystem::path> final_checkpoint;
};

/// Runs the remaining epochs, writing `log.csv`, `metrics.csv`,
/// `ckpt-{epoch}` and `report/` under the run directory when one is set.
FitResult fit(const RunConfig& config, const data::Dataset& train, const data::Dataset* test,
              const FitOptions& options = {});

/// Evaluation used at the end of fit and by the report command.
eval::EvalReport evaluate_run(const model::ModelState& model, const data::Dataset& train,
                              const data::Dataset* test, const noise::NoiseLedger* ledger,
                              const lde::TargetStore* store);

}  // namespace nfer::trainer
