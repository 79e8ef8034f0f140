#include "segp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace segp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  template <class T>
  void pod(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Matrix& m) {
    text(name);
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) pod<double>(m(i, j));
    }
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  template <class T>
  T pod() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw std::runtime_error("truncated checkpoint " + path_.string());
    return value;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 30)) throw std::runtime_error("corrupt checkpoint " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("truncated checkpoint " + path_.string());
    return s;
  }
  Matrix matrix() {
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    if (rows * cols > (1ULL << 28)) throw std::runtime_error("corrupt checkpoint " + path_.string());
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = pod<double>();
    }
    return m;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const TrainState& state,
                      const Vector& scales, const std::string& config_json) {
  Writer out(path);
  for (int i = 0; i < 8; ++i) out.pod<char>(kCheckpointMagic[i]);
  out.pod<std::uint32_t>(kCheckpointVersion);
  out.text(config_json);
  out.pod<std::int32_t>(state.epoch);
  out.pod<std::int64_t>(state.step);
  out.text(state.rng.serialize());
  const ModelShape& s = state.params.shape;
  for (int v : {s.canvas, s.feature_grid, s.encoder_hidden, s.decoder_hidden, s.latent_dim,
                s.state_dim}) {
    out.pod<std::int32_t>(v);
  }
  out.pod<double>(s.temperature);
  const auto params = state.params.tensors();
  const auto m1 = state.first_moment.tensors();
  const auto m2 = state.second_moment.tensors();
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(3 * params.size() + 1));
  for (const auto& [name, t] : params) out.tensor("param/" + name, *t);
  for (const auto& [name, t] : m1) out.tensor("adam_m/" + name, *t);
  for (const auto& [name, t] : m2) out.tensor("adam_v/" + name, *t);
  out.tensor("context/scales", Matrix(scales));
  out.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  for (char& c : magic) c = r.pod<char>();
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  }
  Checkpoint ck;
  ck.config_json = r.text();
  ck.state.epoch = r.pod<std::int32_t>();
  ck.state.step = r.pod<std::int64_t>();
  ck.state.rng = Rng::deserialize(r.text());
  ModelShape& s = ck.state.params.shape;
  s.canvas = r.pod<std::int32_t>();
  s.feature_grid = r.pod<std::int32_t>();
  s.encoder_hidden = r.pod<std::int32_t>();
  s.decoder_hidden = r.pod<std::int32_t>();
  s.latent_dim = r.pod<std::int32_t>();
  s.state_dim = r.pod<std::int32_t>();
  s.temperature = r.pod<double>();
  s.validate();
  ck.state.params.enc.temperature = s.temperature;

  std::map<std::string, Matrix> tensors;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text();
    tensors[name] = r.matrix();
  }
  auto take = [&](const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error(path.string() + ": missing tensor " + name);
    return it->second;
  };
  ck.state.first_moment.shape = s;
  ck.state.second_moment.shape = s;
  auto p = ck.state.params.tensors();
  auto m1 = ck.state.first_moment.tensors();
  auto m2 = ck.state.second_moment.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    *p[i].second = take("param/" + p[i].first);
    *m1[i].second = take("adam_m/" + m1[i].first);
    *m2[i].second = take("adam_v/" + m2[i].first);
  }
  ck.scales = take("context/scales").col(0);
  return ck;
}

}  // namespace segp
