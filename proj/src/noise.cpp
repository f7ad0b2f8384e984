#include "nfer/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace nfer::noise {

NoiseSpec NoiseSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("noise spec must look like kind:ratio, got '" + text + "'");
  NoiseSpec s;
  const std::string kind = text.substr(0, colon);
  if (kind == "symmetric" || kind == "sym") s.kind = NoiseKind::symmetric;
  else if (kind == "asymmetric" || kind == "asym") s.kind = NoiseKind::asymmetric;
  else throw ConfigError("unknown noise kind '" + kind + "'");
  try {
    std::size_t used = 0;
    s.ratio = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("malformed noise ratio in '" + text + "'");
  }
  if (!(s.ratio >= 0.0 && s.ratio <= 1.0)) throw RangeError("noise ratio", "must lie in [0,1]");
  return s;
}

std::size_t NoiseLedger::flipped_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.flipped(); }));
}

const LedgerEntry& NoiseLedger::at(std::int64_t id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw DataError("noise ledger has no entry for sample " + std::to_string(id));
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw RangeError("ratio", "must lie in [0,1]");
}

// floor(ratio * n) distinct indices, uniformly without replacement.
std::vector<std::size_t> choose_flipped(std::size_t n, double ratio, std::mt19937_64& rng) {
  // The epsilon keeps ratios like 0.3 * 1000 from landing on 299.999...
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots are the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(std::min(count, n));
  return idx;
}

NoisyDataset start_ledger(const data::Dataset& dataset) {
  NoisyDataset out{dataset, {}};
  out.ledger.entries.reserve(dataset.size());
  for (const auto& r : dataset.records) out.ledger.entries.push_back({r.id, r.label, r.label});
  return out;
}

}  // namespace

NoisyDataset inject_symmetric(const data::Dataset& dataset, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  std::mt19937_64 rng(seed);
  NoisyDataset out = start_ledger(dataset);
  const int c = dataset.num_classes;
  if (c < 2) throw DataError("symmetric noise needs at least 2 classes");
  for (std::size_t i : choose_flipped(dataset.size(), ratio, rng)) {
    const int orig = out.dataset.records[i].label;
    std::uniform_int_distribution<int> other(0, c - 2);
    int nl = other(rng);
    if (nl >= orig) ++nl;  // skip the original class
    out.dataset.records[i].label = nl;
    out.ledger.entries[i].injected = nl;
  }
  return out;
}

NoisyDataset inject_asymmetric(const data::Dataset& dataset, double ratio, const FlipMap& flip_map,
                               std::uint64_t seed) {
  check_ratio(ratio);
  validate_flip_map(flip_map, dataset.num_classes);
  std::mt19937_64 rng(seed);
  NoisyDataset out = start_ledger(dataset);
  for (std::size_t i : choose_flipped(dataset.size(), ratio, rng)) {
    const int nl = flip_map[static_cast<std::size_t>(out.dataset.records[i].label)];
    out.dataset.records[i].label = nl;
    out.ledger.entries[i].injected = nl;
  }
  return out;
}

NoisyDataset inject(const data::Dataset& dataset, const NoiseSpec& spec) {
  if (spec.kind == NoiseKind::symmetric) return inject_symmetric(dataset, spec.ratio, spec.seed);
  const FlipMap map = spec.flip_map ? *spec.flip_map : default_flip_map(dataset.num_classes);
  return inject_asymmetric(dataset, spec.ratio, map, spec.seed);
}

FlipMap default_flip_map(int num_classes) {
  if (num_classes == 8) {
    // anger->disgust, disgust->anger, fear->surprise, happiness->neutral,
    // sadness->neutral, surprise->anger, neutral->sadness, contempt->neutral
    return {1, 0, 5, 6, 6, 0, 4, 6};
  }
  FlipMap m(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) m[static_cast<std::size_t>(k)] = (k + 1) % num_classes;
  return m;
}

FlipMap parse_flip_map(const std::string& text, int num_classes) {
  FlipMap m(static_cast<std::size_t>(num_classes), -1);
  std::stringstream ss(text);
  std::string pair;
  while (std::getline(ss, pair, ',')) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw ConfigError("flip map entry '" + pair + "' is not src:dst");
    int src = 0, dst = 0;
    try {
      src = std::stoi(pair.substr(0, colon));
      dst = std::stoi(pair.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("flip map entry '" + pair + "' is not numeric");
    }
    if (src < 0 || src >= num_classes) throw ConfigError("flip map source " + std::to_string(src) + " out of range");
    m[static_cast<std::size_t>(src)] = dst;
  }
  validate_flip_map(m, num_classes);
  return m;
}

void validate_flip_map(const FlipMap& map, int num_classes) {
  if (map.size() != static_cast<std::size_t>(num_classes))
    throw ConfigError("flip map covers " + std::to_string(map.size()) + " classes, expected " + std::to_string(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    const int t = map[static_cast<std::size_t>(k)];
    if (t < 0 || t >= num_classes) throw ConfigError("flip map is partial: class " + std::to_string(k) + " has no valid target");
    if (t == k) throw ConfigError("flip map sends class " + std::to_string(k) + " to itself");
  }
}

LedgerStats ledger_stats(const NoiseLedger& ledger, int num_classes) {
  if (ledger.entries.empty()) throw DataError("ledger_stats: empty ledger");
  LedgerStats s;
  const auto c = static_cast<std::size_t>(num_classes);
  s.flip_counts = Matrix(c, c);
  std::size_t flipped = 0;
  for (const auto& e : ledger.entries) {
    if (!e.flipped()) continue;
    ++flipped;
    s.flip_counts(static_cast<std::size_t>(e.original), static_cast<std::size_t>(e.injected)) += 1.0;
  }
  s.noise_rate = static_cast<double>(flipped) / static_cast<double>(ledger.entries.size());
  return s;
}

data::Dataset restore_clean(const data::Dataset& noisy, const NoiseLedger& ledger) {
  data::Dataset out = noisy;
  for (auto& r : out.records) r.label = ledger.at(r.id).original;
  return out;
}

void save_ledger(const std::filesystem::path& path, const NoiseLedger& ledger) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ledger " + path.string());
  out << "id,original,injected\n";
  for (const auto& e : ledger.entries) out << e.id << ',' << e.original << ',' << e.injected << '\n';
}

NoiseLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("ledger not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,original,injected", 0) != 0) throw DataError("ledger: bad header");
  NoiseLedger l;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    LedgerEntry e;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> e.id >> c1 >> e.original >> c2 >> e.injected) || c1 != ',' || c2 != ',')
      throw DataError("ledger: malformed row '" + line + "'");
    l.entries.push_back(e);
  }
  return l;
}

}  // namespace nfer::noise
