#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfer {

// Error taxonomy. The CLI maps each family onto an exit code:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A config field outside its admissible range; carries the field name.
class RangeError : public ConfigError {
 public:
  RangeError(std::string field, const std::string& what)
      : ConfigError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public DataError {
 public:
  explicit DuplicateIdError(std::int64_t id)
      : DataError("duplicate sample id " + std::to_string(id)), id_(id) {}
  std::int64_t id() const noexcept { return id_; }

 private:
  std::int64_t id_;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class NonSimplexError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline constexpr double kSimplexTolerance = 1e-6;

/// A point on the probability simplex. Construction validates.
class LabelDistribution {
 public:
  explicit LabelDistribution(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t j) const noexcept { return probs_[j]; }
  std::size_t argmax() const noexcept;

 private:
  std::vector<double> probs_;
};

/// Throws NonSimplexError unless `d` sums to 1 (within kSimplexTolerance) with
/// every entry in [0, 1].
LabelDistribution validate_distribution(std::span<const double> d);
bool is_on_simplex(std::span<const double> d, double tol = kSimplexTolerance) noexcept;
/// Clip tiny negatives to zero and rescale to unit mass.
void renormalize(std::span<double> d);

class OneHotLabel {
 public:
  OneHotLabel(int class_index, std::size_t num_classes);
  int class_index() const noexcept { return index_; }
  std::vector<double> expand() const;

 private:
  int index_;
  std::size_t num_classes_;
};

struct SampleRecord {
  std::int64_t id = 0;
  std::vector<double> input;
  int label = 0;
  std::vector<double> landmarks;  // 2*L normalized coordinates

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct FeaturePair {
  std::vector<double> expression;
  std::vector<double> landmark;
};

struct HyperParams {
  int k_neighbors = 8;
  double omega = 0.9;
  double tau = 0.1;
  double delta = 0.7;
  double alpha = 1.0;
  double beta = 0.1;
  int batch_size = 128;
  int epochs = 80;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Architecture and bookkeeping knobs that live beside the hyperparameters in
/// the same config file.
struct ModelOptions {
  std::vector<int> hidden_dims{128};
  int feature_dim = 64;
  int proj_dim = 64;
  double momentum = 0.99;
  int bank_capacity = 1024;
  double target_smoothing = 0.05;

  void validate() const;
  friend bool operator==(const ModelOptions&, const ModelOptions&) = default;
};

/// Loss-component toggles matching the ablation axes.
struct AblationFlags {
  bool use_ld = true;
  bool use_lm_in_lde = true;
  bool use_el = true;
  bool use_pseudo_labels = true;

  static AblationFlags full() { return {}; }
  static AblationFlags baseline() { return {false, false, false, false}; }
  /// Accepts "baseline", "full", "ld", "ld+lm", "ld+lm+el", or a comma list
  /// of flag names (ld,lm,el,pl).
  static AblationFlags parse(const std::string& text);
  std::string name() const;
  void validate() const;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct RunConfig {
  HyperParams hyper;
  ModelOptions model;
  AblationFlags ablation;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses the flat `key = value` format. Unspecified keys keep defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
HyperParams load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);
std::string serialize_config(const HyperParams& hp);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::vector<double> parse_double_list(const std::string& text, char sep);
std::string join_doubles(std::span<const double> v, char sep);

}  // namespace nfer
