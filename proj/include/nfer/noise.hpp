#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nfer/data.hpp"
#include "nfer/matrix.hpp"

namespace nfer::noise {

enum class NoiseKind { symmetric, asymmetric };

/// flip_map[k] is the class that k is flipped to.
using FlipMap = std::vector<int>;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  std::optional<FlipMap> flip_map;
  std::uint64_t seed = 0;

  /// "symmetric:0.3" or "asymmetric:0.2".
  static NoiseSpec parse(const std::string& text);
};

struct LedgerEntry {
  std::int64_t id = 0;
  int original = 0;
  int injected = 0;
  bool flipped() const noexcept { return original != injected; }
  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// One entry per training sample, in dataset order.
struct NoiseLedger {
  std::vector<LedgerEntry> entries;

  std::size_t flipped_count() const;
  /// Entry for `id`; throws DataError when absent.
  const LedgerEntry& at(std::int64_t id) const;
  friend bool operator==(const NoiseLedger&, const NoiseLedger&) = default;
};

struct NoisyDataset {
  data::Dataset dataset;
  NoiseLedger ledger;
};

NoisyDataset inject_symmetric(const data::Dataset& dataset, double ratio, std::uint64_t seed);
NoisyDataset inject_asymmetric(const data::Dataset& dataset, double ratio, const FlipMap& flip_map,
                               std::uint64_t seed);
NoisyDataset inject(const data::Dataset& dataset, const NoiseSpec& spec);

/// The expression-confusion map for the 8-class protocol (anger, disgust,
/// fear, happiness, sadness, surprise, neutral, contempt); k -> (k+1) mod C
/// for any other class count.
FlipMap default_flip_map(int num_classes);
/// Parses "0:1,1:0,..." into a map over `num_classes` classes.
FlipMap parse_flip_map(const std::string& text, int num_classes);
/// Throws ConfigError unless the map is total over C classes and irreflexive.
void validate_flip_map(const FlipMap& map, int num_classes);

struct LedgerStats {
  double noise_rate = 0.0;
  /// C x C counts; row = original class, column = injected class, flipped
  /// entries only.
  Matrix flip_counts;
};

LedgerStats ledger_stats(const NoiseLedger& ledger, int num_classes);

/// Applies the ledger's original labels back onto `noisy`.
data::Dataset restore_clean(const data::Dataset& noisy, const NoiseLedger& ledger);

/// CSV `id,original,injected`.
void save_ledger(const std::filesystem::path& path, const NoiseLedger& ledger);
NoiseLedger load_ledger(const std::filesystem::path& path);

}  // namespace nfer::noise
