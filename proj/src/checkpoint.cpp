#include "nfer/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace nfer {

namespace {

constexpr char kMagic[8] = {'N', 'F', 'E', 'R', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Matrix& m) {
    pod<std::uint64_t>(m.rows());
    pod<std::uint64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.values().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  void matrices(const std::vector<Matrix>& ms) {
    pod<std::uint64_t>(ms.size());
    for (const auto& m : ms) matrix(m);
  }
  void bank(const elcl::MemoryBank& b) {
    pod<std::uint64_t>(b.capacity());
    pod<std::uint64_t>(b.dim());
    const auto labels = b.labels();
    pod<std::uint64_t>(labels.size());
    for (int l : labels) pod<std::int32_t>(l);
    matrix(b.keys());
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw DataError("checkpoint truncated");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) throw DataError("checkpoint: implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw DataError("checkpoint truncated");
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::uint64_t>();
    const auto c = pod<std::uint64_t>();
    if (r * c > (1ull << 32)) throw DataError("checkpoint: implausible matrix size");
    Matrix m(r, c);
    in_.read(reinterpret_cast<char*>(m.values().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in_) throw DataError("checkpoint truncated");
    return m;
  }
  std::vector<Matrix> matrices() {
    const auto n = pod<std::uint64_t>();
    std::vector<Matrix> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(matrix());
    return out;
  }
  elcl::MemoryBank bank() {
    const auto cap = pod<std::uint64_t>();
    const auto dim = pod<std::uint64_t>();
    const auto n = pod<std::uint64_t>();
    std::vector<int> labels;
    for (std::uint64_t i = 0; i < n; ++i) labels.push_back(pod<std::int32_t>());
    const Matrix keys = matrix();
    elcl::MemoryBank b(cap, dim);
    if (n) b.enqueue(keys, labels);
    return b;
  }

 private:
  std::ifstream& in_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(Checkpoint::kVersion);
    w.str(serialize_config(ckpt.config));
    const auto& mc = ckpt.model_config;
    w.pod<std::uint64_t>(mc.input_dim);
    w.pod<std::uint64_t>(mc.hidden_dims.size());
    for (auto h : mc.hidden_dims) w.pod<std::uint64_t>(h);
    w.pod<std::uint64_t>(mc.feature_dim_u);
    w.pod<std::uint64_t>(mc.feature_dim_v);
    w.pod<std::uint64_t>(mc.proj_dim);
    w.pod<double>(mc.momentum);
    w.pod<std::uint64_t>(mc.num_classes);
    w.pod<std::uint64_t>(mc.landmark_count);
    w.pod<std::int32_t>(ckpt.epochs_completed);
    w.pod<std::int64_t>(ckpt.global_step);
    w.matrices(ckpt.parameters);
    w.pod<std::int64_t>(ckpt.adam_steps);
    w.matrices(ckpt.adam_m);
    w.matrices(ckpt.adam_v);
    w.pod<std::uint64_t>(ckpt.store_ids.size());
    for (auto id : ckpt.store_ids) w.pod<std::int64_t>(id);
    w.matrix(ckpt.store_targets);
    w.pod<std::int32_t>(ckpt.store_epoch);
    w.pod<std::uint8_t>(ckpt.banks_serialized ? 1 : 0);
    if (ckpt.banks_serialized) {
      w.bank(ckpt.bank_u);
      w.bank(ckpt.bank_v);
    }
    if (!out) throw DataError("checkpoint write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint: " + path.string());
  Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = parse_config(r.str());
  auto& mc = c.model_config;
  mc.input_dim = r.pod<std::uint64_t>();
  const auto nh = r.pod<std::uint64_t>();
  mc.hidden_dims.clear();
  for (std::uint64_t i = 0; i < nh; ++i) mc.hidden_dims.push_back(r.pod<std::uint64_t>());
  mc.feature_dim_u = r.pod<std::uint64_t>();
  mc.feature_dim_v = r.pod<std::uint64_t>();
  mc.proj_dim = r.pod<std::uint64_t>();
  mc.momentum = r.pod<double>();
  mc.num_classes = r.pod<std::uint64_t>();
  mc.landmark_count = r.pod<std::uint64_t>();
  c.epochs_completed = r.pod<std::int32_t>();
  c.global_step = r.pod<std::int64_t>();
  c.parameters = r.matrices();
  c.adam_steps = r.pod<std::int64_t>();
  c.adam_m = r.matrices();
  c.adam_v = r.matrices();
  const auto ns = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ns; ++i) c.store_ids.push_back(r.pod<std::int64_t>());
  c.store_targets = r.matrix();
  c.store_epoch = r.pod<std::int32_t>();
  c.banks_serialized = r.pod<std::uint8_t>() != 0;
  if (c.banks_serialized) {
    c.bank_u = r.bank();
    c.bank_v = r.bank();
  }
  return c;
}

model::ModelState model_from_checkpoint(const Checkpoint& ckpt) {
  std::mt19937_64 rng(0);
  model::ModelState m(ckpt.model_config, rng);
  auto params = m.all_parameters();
  if (ckpt.parameters.size() < params.size()) throw DataError("checkpoint has too few parameter tensors");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ckpt.parameters[i].rows() != params[i]->value.rows() || ckpt.parameters[i].cols() != params[i]->value.cols())
      throw ShapeError("checkpoint parameter " + std::to_string(i) + " has the wrong shape");
    params[i]->value = ckpt.parameters[i];
  }
  return m;
}

}  // namespace nfer
