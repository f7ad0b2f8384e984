#include "nfer/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace nfer::data {

void Dataset::validate() const {
  if (num_classes < 2) throw DataError("dataset needs at least 2 classes");
  if (landmark_count < 0) throw DataError("negative landmark count");
  std::unordered_set<std::int64_t> seen;
  const std::size_t dim = input_dim();
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) throw DuplicateIdError(r.id);
    if (r.label < 0 || r.label >= num_classes)
      throw DataError("sample " + std::to_string(r.id) + ": class " + std::to_string(r.label) + " out of range");
    if (r.landmarks.size() != 2 * static_cast<std::size_t>(landmark_count))
      throw ShapeError("sample " + std::to_string(r.id) + ": landmark vector has length " +
                       std::to_string(r.landmarks.size()) + ", expected " + std::to_string(2 * landmark_count));
    if (r.input.size() != dim || dim == 0)
      throw ShapeError("sample " + std::to_string(r.id) + ": input length " + std::to_string(r.input.size()) +
                       " differs from " + std::to_string(dim));
  }
}

Matrix Dataset::inputs(std::span<const std::size_t> idx) const {
  Matrix m(idx.size(), input_dim());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(records[idx[i]].input.begin(), records[idx[i]].input.end(), m.row(i).begin());
  return m;
}

Matrix Dataset::inputs() const {
  std::vector<std::size_t> all(size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return inputs(all);
}

Matrix Dataset::landmarks(std::span<const std::size_t> idx) const {
  Matrix m(idx.size(), 2 * static_cast<std::size_t>(landmark_count));
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(records[idx[i]].landmarks.begin(), records[idx[i]].landmarks.end(), m.row(i).begin());
  return m;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<int> Dataset::class_counts() const {
  std::vector<int> c(static_cast<std::size_t>(num_classes), 0);
  for (const auto& r : records) ++c[static_cast<std::size_t>(r.label)];
  return c;
}

void SyntheticSpec::validate(int k_neighbors) const {
  if (num_classes < 2) throw RangeError("num_classes", "must be at least 2");
  if (samples_per_class < k_neighbors + 1) throw RangeError("samples_per_class", "must exceed the neighbor count");
  if (input_dim < 1) throw RangeError("input_dim", "must be positive");
  if (landmark_count < 1) throw RangeError("landmark_count", "must be positive");
  if (!(class_separation > 0.0)) throw RangeError("class_separation", "must be positive");
  if (!(view_noise_std >= 0.0)) throw RangeError("view_noise_std", "must be nonnegative");
}

namespace {

// Canonical 5-point face layout: eyes, nose tip, mouth corners.
constexpr std::array<std::array<double, 2>, 5> kFaceTemplate{{
    {0.30, 0.35}, {0.70, 0.35}, {0.50, 0.55}, {0.35, 0.75}, {0.65, 0.75}}};
// Per-class landmark displacement amplitude and per-sample jitter relative to
// view_noise_std, both in normalized coordinates.
constexpr double kClassDeform = 0.08;
constexpr double kLandmarkJitter = 0.02;

std::vector<std::vector<double>> class_means(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const auto c = static_cast<std::size_t>(spec.num_classes);
  const auto d = static_cast<std::size_t>(spec.input_dim);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> v(d);
    for (double& x : v) x = gauss(rng);
    // Gram-Schmidt while there is room, so pairwise distances are exactly
    // the requested separation.
    if (k < d) {
      for (const auto& u : dirs) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
      }
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (double& x : v) x /= nrm;
    dirs.push_back(std::move(v));
  }
  const double scale = spec.class_separation / std::sqrt(2.0);
  for (auto& v : dirs)
    for (double& x : v) x *= scale;
  return dirs;
}

std::vector<std::vector<double>> landmark_templates(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const auto c = static_cast<std::size_t>(spec.num_classes);
  const auto l = static_cast<std::size_t>(spec.landmark_count);
  std::uniform_real_distribution<double> deform(-kClassDeform, kClassDeform);
  std::vector<std::vector<double>> out(c, std::vector<double>(2 * l));
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t p = 0; p < l; ++p) {
      std::array<double, 2> base;
      if (l == kFaceTemplate.size()) {
        base = kFaceTemplate[p];
      } else {
        const double angle = 2.0 * M_PI * static_cast<double>(p) / static_cast<double>(l);
        base = {0.5 + 0.3 * std::cos(angle), 0.5 + 0.3 * std::sin(angle)};
      }
      for (std::size_t a = 0; a < 2; ++a) out[k][2 * p + a] = std::clamp(base[a] + deform(rng), 0.05, 0.95);
    }
  }
  return out;
}

}  // namespace

SplitDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate(0);
  std::mt19937_64 rng(spec.seed);
  const auto means = class_means(spec, rng);
  const auto templates = landmark_templates(spec, rng);
  std::normal_distribution<double> input_noise(0.0, 1.0);

  SplitDataset out;
  out.train.num_classes = out.test.num_classes = spec.num_classes;
  out.train.landmark_count = out.test.landmark_count = spec.landmark_count;
  const int train_per_class = (spec.samples_per_class * 4) / 5;
  std::int64_t next_id = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      SampleRecord r;
      r.id = next_id++;
      r.label = k;
      r.input = means[static_cast<std::size_t>(k)];
      for (double& x : r.input) x += spec.view_noise_std * input_noise(rng);
      r.landmarks = templates[static_cast<std::size_t>(k)];
      for (double& x : r.landmarks)
        x = std::clamp(x + kLandmarkJitter * spec.view_noise_std * input_noise(rng), 0.0, 1.0);
      (s < train_per_class ? out.train : out.test).records.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

bool looks_numeric(const std::string& s) {
  try {
    parse_double_list(s, ';');
    return true;
  } catch (const DataError&) {
    return false;
  }
}

std::vector<double> read_vector_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open input file " + p.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (char& ch : text)
    if (ch == ',' || ch == ';' || ch == '\n' || ch == '\r' || ch == '\t') ch = ' ';
  std::vector<double> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double_list(tok, ';').front());
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path.string());
  DatasetManifest m;
  int declared_c = -1, declared_l = -1;
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  int max_class = -1;
  std::size_t lm_len = 0;
  bool lm_len_set = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = strip(line.substr(1, eq - 1));
      const std::string val = strip(line.substr(eq + 1));
      if (key == "num_classes") declared_c = std::stoi(val);
      else if (key == "landmark_count") declared_l = std::stoi(val);
      else if (key == "split") {
        if (val == "train") m.split = Split::train;
        else if (val == "test") m.split = Split::test;
        else throw DataError("manifest: unknown split '" + val + "'");
      }
      continue;
    }
    if (!header_seen) {
      if (line != "id,class,landmarks,input") throw DataError("manifest: expected header 'id,class,landmarks,input'");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 fields");
    SampleRecord r;
    try {
      r.id = std::stoll(f[0]);
      r.label = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": malformed id or class");
    }
    r.landmarks = parse_double_list(f[2], ';');
    const std::string input = strip(f[3]);
    if (looks_numeric(input)) {
      r.input = parse_double_list(input, ';');
    } else {
      const auto p = path.parent_path() / input;
      if (!std::filesystem::exists(p)) throw DataError("manifest line " + std::to_string(lineno) + ": missing file " + p.string());
      r.input = read_vector_file(p);
    }
    if (declared_l < 0) {
      if (!lm_len_set) {
        lm_len = r.landmarks.size();
        lm_len_set = true;
        if (lm_len % 2 != 0) throw ShapeError("manifest: landmark vector of odd length " + std::to_string(lm_len));
      }
    }
    max_class = std::max(max_class, r.label);
    m.data.records.push_back(std::move(r));
  }
  if (!header_seen) throw DataError("manifest: missing header");
  m.data.num_classes = declared_c >= 0 ? declared_c : max_class + 1;
  m.data.landmark_count = declared_l >= 0 ? declared_l : static_cast<int>(lm_len / 2);
  m.data.validate();
  return m;
}

void save_manifest(const std::filesystem::path& path, const Dataset& data, Split split) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "# num_classes=" << data.num_classes << '\n'
      << "# landmark_count=" << data.landmark_count << '\n'
      << "# split=" << (split == Split::train ? "train" : "test") << '\n'
      << "id,class,landmarks,input\n";
  for (const auto& r : data.records)
    out << r.id << ',' << r.label << ',' << join_doubles(r.landmarks, ';') << ',' << join_doubles(r.input, ';') << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<double> progressive_sampling_weights(int epoch, const SamplerSchedule& schedule) {
  if (schedule.total_epochs < 1) throw RangeError("total_epochs", "must be positive");
  if (epoch < 0 || epoch >= schedule.total_epochs)
    throw RangeError("epoch", std::to_string(epoch) + " outside [0," + std::to_string(schedule.total_epochs) + ")");
  if (schedule.class_counts.empty()) throw DataError("sampler schedule without classes");
  double total = 0.0;
  for (int n : schedule.class_counts) {
    if (n < 1) throw DataError("sampler schedule: every class needs at least one sample");
    total += n;
  }
  const double t = schedule.total_epochs == 1 ? 1.0 : static_cast<double>(epoch) / (schedule.total_epochs - 1);
  const double c = static_cast<double>(schedule.class_counts.size());
  std::vector<double> w;
  w.reserve(schedule.class_counts.size());
  for (int n : schedule.class_counts) w.push_back((1.0 - t) * (n / total) + t / c);
  return w;
}

BatchSampler::BatchSampler(std::span<const int> labels, int num_classes)
    : by_class_(static_cast<std::size_t>(num_classes)) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw DataError("sampler: label out of range");
    by_class_[static_cast<std::size_t>(labels[i])].push_back(i);
  }
}

std::vector<std::size_t> BatchSampler::sample(std::span<const double> weights, std::size_t batch_size,
                                              std::mt19937_64& rng) const {
  if (weights.size() != by_class_.size()) throw ShapeError("sampler: weight vector length differs from class count");
  for (std::size_t k = 0; k < weights.size(); ++k)
    if (weights[k] > 0.0 && by_class_[k].empty())
      throw DataError("sampler: class " + std::to_string(k) + " is empty but has nonzero weight");
  std::discrete_distribution<std::size_t> pick_class(weights.begin(), weights.end());
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto& members = by_class_[pick_class(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    out.push_back(members[pick(rng)]);
  }
  return out;
}

std::vector<SampleRecord> sample_batch(const Dataset& dataset, std::span<const double> weights,
                                       std::size_t batch_size, std::mt19937_64& rng) {
  const auto labels = dataset.labels();
  BatchSampler sampler(labels, dataset.num_classes);
  std::vector<SampleRecord> out;
  for (std::size_t i : sampler.sample(weights, batch_size, rng)) out.push_back(dataset.records[i]);
  return out;
}

}  // namespace nfer::data
