#include "nfer/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace nfer {

bool is_on_simplex(std::span<const double> d, double tol) noexcept {
  if (d.empty()) return false;
  double sum = 0.0;
  for (double x : d) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0 + tol) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol;
}

LabelDistribution validate_distribution(std::span<const double> d) {
  return LabelDistribution(std::vector<double>(d.begin(), d.end()));
}

LabelDistribution::LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw NonSimplexError("empty distribution");
  double sum = 0.0;
  for (double x : probs_) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
      throw NonSimplexError("distribution entry outside [0,1]: " + format_double(x));
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw NonSimplexError("distribution sums to " + format_double(sum));
  }
}

std::size_t LabelDistribution::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void renormalize(std::span<double> d) {
  double sum = 0.0;
  for (double& x : d) {
    if (x < 0.0) x = 0.0;
    sum += x;
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NonSimplexError("cannot renormalize zero-mass vector");
  for (double& x : d) x /= sum;
}

OneHotLabel::OneHotLabel(int class_index, std::size_t num_classes)
    : index_(class_index), num_classes_(num_classes) {
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= num_classes) {
    throw DataError("class index " + std::to_string(class_index) + " outside [0," +
                    std::to_string(num_classes) + ")");
  }
}

std::vector<double> OneHotLabel::expand() const {
  std::vector<double> v(num_classes_, 0.0);
  v[static_cast<std::size_t>(index_)] = 1.0;
  return v;
}

void HyperParams::validate() const {
  if (k_neighbors < 1) throw RangeError("k_neighbors", "must be positive");
  if (!(omega >= 0.0 && omega < 1.0)) throw RangeError("omega", "must lie in [0,1)");
  if (!(tau > 0.0)) throw RangeError("tau", "must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw RangeError("delta", "must lie in (0,1)");
  if (!(alpha >= 0.0)) throw RangeError("alpha", "must be nonnegative");
  if (!(beta >= 0.0)) throw RangeError("beta", "must be nonnegative");
  if (batch_size < 1) throw RangeError("batch_size", "must be positive");
  if (epochs < 1) throw RangeError("epochs", "must be positive");
  if (!(lr > 0.0)) throw RangeError("lr", "must be positive");
  if (k_neighbors >= batch_size) throw RangeError("k_neighbors", "must be smaller than batch_size");
}

void ModelOptions::validate() const {
  if (hidden_dims.empty()) throw RangeError("hidden_dims", "need at least one hidden layer");
  for (int h : hidden_dims)
    if (h < 1) throw RangeError("hidden_dims", "entries must be positive");
  if (feature_dim < 1) throw RangeError("feature_dim", "must be positive");
  if (proj_dim < 2) throw RangeError("proj_dim", "must be at least 2");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw RangeError("momentum", "must lie in [0,1)");
  if (bank_capacity < 0) throw RangeError("bank_capacity", "must be nonnegative");
  if (!(target_smoothing >= 0.0 && target_smoothing < 1.0))
    throw RangeError("target_smoothing", "must lie in [0,1)");
}

AblationFlags AblationFlags::parse(const std::string& text) {
  if (text == "full") return full();
  if (text == "baseline") return baseline();
  AblationFlags f = baseline();
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), '+', ',');
  std::stringstream ss(norm);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "ld") f.use_ld = true;
    else if (tok == "lm") f.use_lm_in_lde = true;
    else if (tok == "el") f.use_el = true;
    else if (tok == "pl") f.use_pseudo_labels = true;
    else if (!tok.empty()) throw ConfigError("unknown ablation flag '" + tok + "'");
  }
  f.validate();
  return f;
}

std::string AblationFlags::name() const {
  if (*this == baseline()) return "baseline";
  std::string s;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += n;
  };
  add(use_ld, "ld");
  add(use_lm_in_lde, "lm");
  add(use_el, "el");
  add(use_pseudo_labels, "pl");
  return s;
}

void AblationFlags::validate() const {
  if (use_pseudo_labels && !use_el) throw ConfigError("ablation: pseudo-labels require the EL loss");
  if (use_lm_in_lde && !use_ld) throw ConfigError("ablation: landmark space in LDE requires LD");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw ConfigError(key + ": not a number: '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw ConfigError(key + ": not an integer: '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + text + "'");
}

int narrow_int(const std::string& key, long long v) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw RangeError(key, "integer out of range");
  return static_cast<int>(v);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, char sep) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    const std::string tok = trim(text.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw DataError("malformed number '" + tok + "'");
    out.push_back(v);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string join_doubles(std::span<const double> v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  HyperParams& hp = cfg.hyper;
  ModelOptions& mo = cfg.model;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "k_neighbors") hp.k_neighbors = narrow_int(key, parse_int(key, val));
    else if (key == "omega") hp.omega = parse_real(key, val);
    else if (key == "tau") hp.tau = parse_real(key, val);
    else if (key == "delta") hp.delta = parse_real(key, val);
    else if (key == "alpha") hp.alpha = parse_real(key, val);
    else if (key == "beta") hp.beta = parse_real(key, val);
    else if (key == "batch_size") hp.batch_size = narrow_int(key, parse_int(key, val));
    else if (key == "epochs") hp.epochs = narrow_int(key, parse_int(key, val));
    else if (key == "lr") hp.lr = parse_real(key, val);
    else if (key == "seed") {
      std::uint64_t s = 0;
      const auto res = std::from_chars(val.data(), val.data() + val.size(), s);
      if (res.ec != std::errc() || res.ptr != val.data() + val.size())
        throw ConfigError(key + ": not a nonnegative integer: '" + val + "'");
      hp.seed = s;
    } else if (key == "hidden_dims") {
      mo.hidden_dims.clear();
      for (double d : parse_double_list(val, ',')) mo.hidden_dims.push_back(narrow_int(key, static_cast<long long>(d)));
    } else if (key == "feature_dim") mo.feature_dim = narrow_int(key, parse_int(key, val));
    else if (key == "proj_dim") mo.proj_dim = narrow_int(key, parse_int(key, val));
    else if (key == "momentum") mo.momentum = parse_real(key, val);
    else if (key == "bank_capacity") mo.bank_capacity = narrow_int(key, parse_int(key, val));
    else if (key == "target_smoothing") mo.target_smoothing = parse_real(key, val);
    else if (key == "use_ld") cfg.ablation.use_ld = parse_bool(key, val);
    else if (key == "use_lm_in_lde") cfg.ablation.use_lm_in_lde = parse_bool(key, val);
    else if (key == "use_el") cfg.ablation.use_el = parse_bool(key, val);
    else if (key == "use_pseudo_labels") cfg.ablation.use_pseudo_labels = parse_bool(key, val);
    else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  hp.validate();
  mo.validate();
  cfg.ablation.validate();
  return cfg;
}

namespace {
std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

HyperParams load_config(const std::filesystem::path& path) { return load_run_config(path).hyper; }

std::string serialize_config(const HyperParams& hp) {
  std::ostringstream os;
  os << "k_neighbors = " << hp.k_neighbors << '\n'
     << "omega = " << format_double(hp.omega) << '\n'
     << "tau = " << format_double(hp.tau) << '\n'
     << "delta = " << format_double(hp.delta) << '\n'
     << "alpha = " << format_double(hp.alpha) << '\n'
     << "beta = " << format_double(hp.beta) << '\n'
     << "batch_size = " << hp.batch_size << '\n'
     << "epochs = " << hp.epochs << '\n'
     << "lr = " << format_double(hp.lr) << '\n'
     << "seed = " << hp.seed << '\n';
  return os.str();
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << serialize_config(cfg.hyper);
  os << "hidden_dims = ";
  for (std::size_t i = 0; i < cfg.model.hidden_dims.size(); ++i) os << (i ? "," : "") << cfg.model.hidden_dims[i];
  os << '\n'
     << "feature_dim = " << cfg.model.feature_dim << '\n'
     << "proj_dim = " << cfg.model.proj_dim << '\n'
     << "momentum = " << format_double(cfg.model.momentum) << '\n'
     << "bank_capacity = " << cfg.model.bank_capacity << '\n'
     << "target_smoothing = " << format_double(cfg.model.target_smoothing) << '\n'
     << "use_ld = " << (cfg.ablation.use_ld ? "true" : "false") << '\n'
     << "use_lm_in_lde = " << (cfg.ablation.use_lm_in_lde ? "true" : "false") << '\n'
     << "use_el = " << (cfg.ablation.use_el ? "true" : "false") << '\n'
     << "use_pseudo_labels = " << (cfg.ablation.use_pseudo_labels ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace nfer
