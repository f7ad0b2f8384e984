#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nfer/core.hpp"
#include "nfer/elcl.hpp"
#include "nfer/matrix.hpp"
#include "nfer/model.hpp"

namespace nfer {

/// Everything needed to resume training or evaluate a model. Binary,
/// little-endian host layout, versioned by kVersion.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  RunConfig config;
  model::DualBackboneConfig model_config;
  int epochs_completed = 0;
  long long global_step = 0;
  /// ModelState::all_parameters() followed by both contribution scorers.
  std::vector<Matrix> parameters;
  long long adam_steps = 0;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
  std::vector<std::int64_t> store_ids;
  Matrix store_targets;
  int store_epoch = 0;
  /// When false the banks were reset and resume starts with empty queues.
  bool banks_serialized = true;
  elcl::MemoryBank bank_u;
  elcl::MemoryBank bank_v;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// A ModelState with the checkpoint's weights (the leading parameters).
model::ModelState model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace nfer
