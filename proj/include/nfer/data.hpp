#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "nfer/core.hpp"
#include "nfer/matrix.hpp"

namespace nfer::data {

/// A labelled collection with fixed class count C and landmark count L.
struct Dataset {
  int num_classes = 0;
  int landmark_count = 0;
  std::vector<SampleRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t input_dim() const noexcept { return records.empty() ? 0 : records.front().input.size(); }
  /// Checks unique ids, label range and consistent vector lengths.
  void validate() const;
  Matrix inputs(std::span<const std::size_t> idx) const;
  Matrix inputs() const;
  Matrix landmarks(std::span<const std::size_t> idx) const;
  std::vector<int> labels() const;
  std::vector<int> class_counts() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticSpec {
  int num_classes = 5;
  int samples_per_class = 200;
  int input_dim = 64;
  int landmark_count = 5;
  double class_separation = 4.0;
  double view_noise_std = 0.5;
  std::uint64_t seed = 0;

  void validate(int k_neighbors = 8) const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Per class: a mean input vector and a landmark template. Each sample draws
/// its input and its landmarks independently around those two.
SplitDataset generate_synthetic(const SyntheticSpec& spec);

enum class Split { train, test };

struct DatasetManifest {
  Dataset data;
  Split split = Split::train;
};

/// CSV with header `id,class,landmarks,input`. Landmarks and inline inputs are
/// ';'-separated floats; an input that is not a float list is a path (relative
/// to the manifest) to a text file of floats. Optional leading directives
/// `# num_classes=C`, `# landmark_count=L`, `# split=train|test`.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Dataset& data, Split split);

struct SamplerSchedule {
  std::vector<int> class_counts;
  int total_epochs = 1;
};

/// Linear interpolation from instance-balanced (epoch 0) to class-balanced
/// (final epoch) class probabilities.
std::vector<double> progressive_sampling_weights(int epoch, const SamplerSchedule& schedule);

/// Draws batches by picking a class from `weights`, then a uniform member of
/// that class. Holds per-class index lists built once from the labels.
class BatchSampler {
 public:
  BatchSampler(std::span<const int> labels, int num_classes);
  std::vector<std::size_t> sample(std::span<const double> weights, std::size_t batch_size,
                                  std::mt19937_64& rng) const;

 private:
  std::vector<std::vector<std::size_t>> by_class_;
};

std::vector<SampleRecord> sample_batch(const Dataset& dataset, std::span<const double> weights,
                                       std::size_t batch_size, std::mt19937_64& rng);

}  // namespace nfer::data
